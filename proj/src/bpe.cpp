#include "nmt/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace nmt {

std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> chars;
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if ((c & 0x80u) == 0x00u) len = 1;
    else if ((c & 0xE0u) == 0xC0u) len = 2;
    else if ((c & 0xF0u) == 0xE0u) len = 3;
    else if ((c & 0xF8u) == 0xF0u) len = 4;
    if (i + len > s.size()) len = 1;
    chars.push_back(s.substr(i, len));
    i += len;
  }
  return chars;
}

namespace {

using Word = std::vector<std::string>;

// Word frequency table over the corpus sides used for learning.
std::map<std::string, std::size_t> word_frequencies(const ParallelCorpus& corpus, bool shared) {
  std::map<std::string, std::size_t> freq;
  for (const auto& pair : corpus.pairs) {
    for (const auto& w : pair.source) ++freq[w];
    if (shared) {
      for (const auto& w : pair.target) ++freq[w];
    }
  }
  return freq;
}

void merge_in_word(Word& word, const std::string& left, const std::string& right) {
  Word out;
  out.reserve(word.size());
  std::size_t i = 0;
  while (i < word.size()) {
    if (i + 1 < word.size() && word[i] == left && word[i + 1] == right) {
      out.push_back(left + right);
      i += 2;
    } else {
      out.push_back(word[i]);
      ++i;
    }
  }
  word = std::move(out);
}

}  // namespace

BpeModel learn_bpe(const ParallelCorpus& corpus, std::size_t num_merges, bool shared) {
  if (corpus.empty()) throw std::invalid_argument("learn_bpe: corpus is empty");
  const auto freq = word_frequencies(corpus, shared);
  std::vector<std::pair<Word, std::size_t>> words;
  words.reserve(freq.size());
  for (const auto& [text, f] : freq) words.emplace_back(utf8_chars(text), f);

  BpeModel model;
  for (std::size_t step = 0; step < num_merges; ++step) {
    // Positional pair counts, weighted by word frequency. std::map keys give
    // the lexicographic tie-break for free.
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& [word, f] : words) {
      for (std::size_t i = 0; i + 1 < word.size(); ++i) {
        counts[{word[i], word[i + 1]}] += f;
      }
    }
    if (counts.empty()) break;
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto [left, right] = best->first;
    model.merges.emplace_back(left, right);
    for (auto& [word, f] : words) merge_in_word(word, left, right);
  }
  return model;
}

std::vector<std::string> apply_bpe_word(const BpeModel& model, const std::string& word) {
  Word symbols = utf8_chars(word);
  if (symbols.size() > 1 && !model.merges.empty()) {
    std::map<std::pair<std::string, std::string>, std::size_t> rank;
    for (std::size_t r = 0; r < model.merges.size(); ++r) {
      rank.emplace(model.merges[r], r);
    }
    for (;;) {
      std::size_t best_rank = std::numeric_limits<std::size_t>::max();
      std::size_t best_pos = 0;
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        auto it = rank.find({symbols[i], symbols[i + 1]});
        if (it != rank.end() && it->second < best_rank) {
          best_rank = it->second;
          best_pos = i;  // leftmost occurrence of the lowest rank
        }
      }
      if (best_rank == std::numeric_limits<std::size_t>::max()) break;
      symbols[best_pos] += symbols[best_pos + 1];
      symbols.erase(symbols.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
      if (symbols.size() == 1) break;
    }
  }
  for (std::size_t i = 0; i + 1 < symbols.size(); ++i) symbols[i] += model.continuation_marker;
  return symbols;
}

std::vector<std::string> apply_bpe(const BpeModel& model, const std::vector<std::string>& sentence) {
  std::vector<std::string> out;
  for (const auto& word : sentence) {
    auto subwords = apply_bpe_word(model, word);
    out.insert(out.end(), subwords.begin(), subwords.end());
  }
  return out;
}

std::vector<std::string> decode_bpe(const std::vector<std::string>& tokens,
                                    const std::string& marker) {
  std::vector<std::string> words;
  std::string current;
  for (const auto& token : tokens) {
    if (token.size() >= marker.size() &&
        token.compare(token.size() - marker.size(), marker.size(), marker) == 0) {
      current += token.substr(0, token.size() - marker.size());
    } else {
      current += token;
      words.push_back(current);
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(current);
  return words;
}

ParallelCorpus apply_bpe_corpus(const BpeModel& model, const ParallelCorpus& corpus) {
  ParallelCorpus out;
  out.name = corpus.name + ".bpe";
  out.pairs.reserve(corpus.pairs.size());
  for (const auto& pair : corpus.pairs) {
    SentencePair sp;
    sp.source = apply_bpe(model, pair.source);
    sp.target = apply_bpe(model, pair.target);
    sp.provenance = pair.provenance;
    out.pairs.push_back(std::move(sp));
  }
  return out;
}

void save_merges(const BpeModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (const auto& [left, right] : model.merges) out << left << ' ' << right << '\n';
  if (!out.good()) throw std::runtime_error("write failed: " + path);
}

BpeModel load_merges(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  BpeModel model;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tokens = split_tokens(line);
    if (tokens.size() != 2) {
      throw std::runtime_error("bad merges line " + std::to_string(lineno) + " in " + path);
    }
    model.merges.emplace_back(tokens[0], tokens[1]);
  }
  return model;
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<bos>");
  add("<eos>");
  add("<unk>");
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw std::out_of_range("Vocabulary::token: id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

int Vocabulary::add(const std::string& token) {
  if (token_to_id_.count(token)) {
    throw std::invalid_argument("Vocabulary::add: duplicate token '" + token + "'");
  }
  const int id = static_cast<int>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
  return id;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    tokens.push_back(token(id));
  }
  return tokens;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    out << id_to_token_[i] << '\t' << i << '\n';
  }
  if (!out.good()) throw std::runtime_error("write failed: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  Vocabulary vocab;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("bad vocabulary line " + std::to_string(lineno) + " in " + path);
    }
    const std::string token = line.substr(0, tab);
    const int id = std::stoi(line.substr(tab + 1));
    if (id < 4) {
      if (vocab.token(id) != token) {
        throw std::runtime_error("reserved token mismatch at line " + std::to_string(lineno) +
                                 " in " + path);
      }
      continue;
    }
    if (id != static_cast<int>(vocab.size())) {
      throw std::runtime_error("non-contiguous id at line " + std::to_string(lineno) + " in " +
                               path);
    }
    vocab.add(token);
  }
  return vocab;
}

Vocabulary build_vocab(const BpeModel& model, const ParallelCorpus& corpus, bool shared) {
  std::map<std::string, std::size_t> freq;
  for (const auto& pair : corpus.pairs) {
    for (const auto& t : apply_bpe(model, pair.source)) ++freq[t];
    if (shared) {
      for (const auto& t : apply_bpe(model, pair.target)) ++freq[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> types(freq.begin(), freq.end());
  std::sort(types.begin(), types.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  for (const auto& [token, f] : types) vocab.add(token);
  return vocab;
}

}  // namespace nmt
