#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "nmt/corpus.hpp"

namespace nmt {

// Byte-pair encoding: ranked merge list learned greedily by pair frequency,
// applied lowest rank first, leftmost occurrence on ties. Non-final subwords
// of a word carry the continuation marker as a suffix ("tok@@").
struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;
  std::string continuation_marker = "@@";
};

// Greedy merge learning over word-internal symbol sequences. Frequency ties
// break by lexicographic (left, right). `shared` pools both corpus sides;
// otherwise only the source side is used.
BpeModel learn_bpe(const ParallelCorpus& corpus, std::size_t num_merges, bool shared);

std::vector<std::string> apply_bpe_word(const BpeModel& model, const std::string& word);
std::vector<std::string> apply_bpe(const BpeModel& model, const std::vector<std::string>& sentence);
std::vector<std::string> decode_bpe(const std::vector<std::string>& tokens,
                                    const std::string& marker = "@@");

ParallelCorpus apply_bpe_corpus(const BpeModel& model, const ParallelCorpus& corpus);

void save_merges(const BpeModel& model, const std::string& path);
BpeModel load_merges(const std::string& path);

// Token <-> id maps with PAD/BOS/EOS/UNK pinned at ids 0..3.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocabulary();  // reserved tokens only

  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return id_to_token_.size(); }

  // Appends a token with the next free id; rejects duplicates.
  int add(const std::string& token);

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;  // skips PAD/BOS/EOS

  void save(const std::string& path) const;  // "token<TAB>id" per line
  static Vocabulary load(const std::string& path);

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Reserved tokens plus every subword type of the BPE-applied corpus (both
// sides when shared), ids by descending frequency then lexicographic.
Vocabulary build_vocab(const BpeModel& model, const ParallelCorpus& corpus, bool shared);

// Splits a UTF-8 string into code points (invalid bytes pass through singly).
std::vector<std::string> utf8_chars(const std::string& s);

}  // namespace nmt
