#include "asrlab/lexicon.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "asrlab/errors.hpp"
#include "asrlab/util.hpp"

namespace asrlab {

TokenVocab::TokenVocab(const std::vector<std::string>& tokens) {
  id_to_str_.push_back("<blank>");
  id_to_str_.push_back("<unk>");
  for (const auto& t : tokens) {
    if (t.empty()) throw ArgError("TokenVocab: empty token string");
    id_to_str_.push_back(t);
  }
  id_to_str_.push_back("<sos/eos>");
  if (size() < 4) throw ArgError("TokenVocab: need at least one non-reserved token (V >= 4)");
  for (int i = 0; i < size(); ++i) {
    auto [it, fresh] = str_to_id_.emplace(id_to_str_[static_cast<size_t>(i)], i);
    if (!fresh) throw ArgError("TokenVocab: duplicate token '" + id_to_str_[static_cast<size_t>(i)] + "'");
  }
}

int TokenVocab::id_of(const std::string& tok) const {
  auto it = str_to_id_.find(tok);
  return it == str_to_id_.end() ? -1 : it->second;
}

const std::string& TokenVocab::str_of(int id) const {
  if (id < 0 || id >= size()) throw ArgError("TokenVocab: id out of range: " + std::to_string(id));
  return id_to_str_[static_cast<size_t>(id)];
}

std::vector<int> TokenVocab::encode(const std::string& text) const {
  std::vector<int> out;
  for (const auto& ch : utf8_chars(text)) {
    int id = id_of(ch);
    out.push_back(id < 0 ? kUnk : id);
  }
  return out;
}

std::string TokenVocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) out += str_of(id);
  return out;
}

std::vector<std::string> TokenVocab::non_reserved() const {
  std::vector<std::string> out;
  for (int i = 0; i < size(); ++i) {
    if (!is_reserved(i)) out.push_back(id_to_str_[static_cast<size_t>(i)]);
  }
  return out;
}

SememeVocab::SememeVocab(const std::vector<std::string>& names) {
  for (const auto& n : names) add(n);
  if (size() != static_cast<int>(names.size())) throw ArgError("SememeVocab: duplicate sememe name");
}

int SememeVocab::id_of(const std::string& name) const {
  auto it = str_to_id_.find(name);
  return it == str_to_id_.end() ? -1 : it->second;
}

const std::string& SememeVocab::str_of(int id) const {
  if (id < 0 || id >= size()) throw ArgError("SememeVocab: id out of range: " + std::to_string(id));
  return id_to_str_[static_cast<size_t>(id)];
}

int SememeVocab::add(const std::string& name) {
  auto it = str_to_id_.find(name);
  if (it != str_to_id_.end()) return it->second;
  int id = size();
  id_to_str_.push_back(name);
  str_to_id_.emplace(name, id);
  return id;
}

const std::vector<int> SememeLexicon::kEmpty;

const std::vector<int>& SememeLexicon::sememes_of(int token) const {
  if (token < 0 || token >= vocab_size_) {
    throw ArgError("SememeLexicon: token id out of range: " + std::to_string(token));
  }
  auto it = entries_.find(token);
  return it == entries_.end() ? kEmpty : it->second;
}

void SememeLexicon::set(int token, std::vector<int> sememes) {
  if (token < 0 || token >= vocab_size_) {
    throw ArgError("SememeLexicon: token id out of range: " + std::to_string(token));
  }
  std::sort(sememes.begin(), sememes.end());
  for (size_t i = 0; i < sememes.size(); ++i) {
    if (sememes[i] < 0 || sememes[i] >= sememe_count_) {
      throw ArgError("SememeLexicon: sememe id out of range: " + std::to_string(sememes[i]));
    }
    if (i > 0 && sememes[i] == sememes[i - 1]) {
      throw ArgError("SememeLexicon: duplicate sememe id " + std::to_string(sememes[i]));
    }
  }
  if (sememes.empty()) {
    entries_.erase(token);
  } else {
    entries_[token] = std::move(sememes);
  }
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

ParsedLexicon parse_lexicon(const std::string& text, const TokenVocab& tokens,
                            std::optional<SememeVocab> sememes) {
  utf8_chars(text);  // validate encoding up front; malformed input is an I/O error
  bool build = !sememes.has_value();
  SememeVocab vocab = build ? SememeVocab() : *sememes;

  std::vector<std::pair<int, std::vector<int>>> parsed;
  std::set<int> seen_tokens;
  std::vector<std::string> skipped;

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError("lexicon line " + std::to_string(line_no) + ": missing TAB separator");
    }
    std::string tok = line.substr(0, tab);
    std::string rest = line.substr(tab + 1);
    if (tok.empty()) {
      throw ParseError("lexicon line " + std::to_string(line_no) + ": empty token field");
    }
    if (rest.empty()) {
      throw ParseError("lexicon line " + std::to_string(line_no) + ": empty sememe field");
    }
    int tok_id = tokens.id_of(tok);
    if (tok_id < 0) {
      skipped.push_back(tok);
      continue;
    }
    if (tokens.is_reserved(tok_id)) {
      throw ParseError("lexicon line " + std::to_string(line_no) + ": reserved token '" + tok +
                       "' may not carry sememes");
    }
    if (!seen_tokens.insert(tok_id).second) {
      throw ParseError("lexicon line " + std::to_string(line_no) + ": duplicate token '" + tok + "'");
    }
    std::vector<int> ids;
    std::set<std::string> names_in_entry;
    for (const std::string& name : split(rest, ',')) {
      if (name.empty()) {
        throw ParseError("lexicon line " + std::to_string(line_no) + ": empty sememe name");
      }
      if (!names_in_entry.insert(name).second) {
        throw ParseError("lexicon line " + std::to_string(line_no) + ": duplicate sememe '" + name +
                         "' in entry");
      }
      int sid = build ? vocab.add(name) : vocab.id_of(name);
      if (sid < 0) {
        throw ParseError("lexicon line " + std::to_string(line_no) + ": unknown sememe '" + name + "'");
      }
      ids.push_back(sid);
    }
    parsed.emplace_back(tok_id, std::move(ids));
  }

  SememeLexicon lex(tokens.size(), vocab.size());
  for (auto& [tok_id, ids] : parsed) lex.set(tok_id, std::move(ids));
  return ParsedLexicon{std::move(lex), std::move(vocab), std::move(skipped)};
}

std::string serialize_lexicon(const SememeLexicon& lex, const TokenVocab& tokens,
                              const SememeVocab& sememes) {
  std::ostringstream out;
  for (const auto& [tok_id, sids] : lex.entries()) {
    out << tokens.str_of(tok_id) << '\t';
    for (size_t i = 0; i < sids.size(); ++i) {
      if (i) out << ',';
      out << sememes.str_of(sids[i]);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<double> sememe_multihot(const SememeLexicon& lex, const TokenVocab& tokens, int token) {
  if (token < 0 || token >= tokens.size()) {
    throw ArgError("sememe_multihot: token id out of range: " + std::to_string(token));
  }
  std::vector<double> out(static_cast<size_t>(lex.sememe_count()), 0.0);
  if (tokens.is_reserved(token)) return out;
  for (int s : lex.sememes_of(token)) out[static_cast<size_t>(s)] = 1.0;
  return out;
}

CoverageStats coverage_stats(const SememeLexicon& lex, const TokenVocab& tokens) {
  CoverageStats st;
  int non_reserved = 0, covered = 0;
  int64_t total_sememes = 0;
  for (int id = 0; id < tokens.size(); ++id) {
    if (tokens.is_reserved(id)) continue;
    ++non_reserved;
    int n = lex.count_of(id);
    if (n > 0) {
      ++covered;
      total_sememes += n;
      st.max_sememes = std::max(st.max_sememes, n);
    }
  }
  if (non_reserved > 0) st.covered_fraction = static_cast<double>(covered) / non_reserved;
  if (covered > 0) st.mean_sememes_per_covered = static_cast<double>(total_sememes) / covered;
  return st;
}

}  // namespace asrlab
