#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nmt {

enum class ProvenanceKind { Original, SyntheticForward, SyntheticBackward, MonolingualBackward };

const char* provenance_kind_name(ProvenanceKind kind);

// Where a sentence pair came from: the original corpus, a forward teacher's
// translation of the original source, a backward teacher's translation of the
// original target, or a backward teacher's translation of monolingual text.
struct Provenance {
  ProvenanceKind kind = ProvenanceKind::Original;
  std::uint32_t round = 0;          // 0 for Original
  std::uint32_t teacher_index = 0;  // unused for Original

  bool operator==(const Provenance&) const = default;
};

struct SentencePair {
  std::vector<std::string> source;
  std::vector<std::string> target;
  Provenance provenance;
};

struct ParallelCorpus {
  std::string name;
  std::vector<SentencePair> pairs;
  // Set by merge_dedup: size of the concatenation before duplicates were
  // removed. 0 means "not a merge result".
  std::size_t merged_union_size = 0;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

struct CorpusStats {
  std::size_t pairs = 0;
  std::size_t original = 0;
  std::size_t synthetic_forward = 0;
  std::size_t synthetic_backward = 0;
  std::size_t monolingual_backward = 0;
  double duplicate_rate = 0.0;  // 1 - deduped/union when merge accounting exists
  double mean_source_len = 0.0;
  double mean_target_len = 0.0;
  std::size_t max_source_len = 0;
  std::size_t max_target_len = 0;

  std::string to_kv_block() const;  // "pairs=700\noriginal=100\n..."
  std::string to_csv() const;       // header + one row
};

struct LoadOptions {
  bool drop_empty = false;  // drop pairs where either side is an empty line
};

struct LoadResult {
  ParallelCorpus corpus;
  std::size_t dropped = 0;
};

// One sentence per line, whitespace-tokenized; both files must have the same
// line count. Empty-line pairs are an error unless drop_empty is set.
LoadResult load_parallel(const std::string& source_path, const std::string& target_path,
                         const Provenance& provenance, const LoadOptions& options = {});

// Inverse of load_parallel up to whitespace normalization (single spaces).
void save_parallel(const ParallelCorpus& corpus, const std::string& source_path,
                   const std::string& target_path);

// Concatenation in the given order with exact-duplicate (source, target)
// pairs removed; first occurrence wins, provenance ignored for equality.
ParallelCorpus merge_dedup(const std::vector<ParallelCorpus>& corpora);

CorpusStats stats(const ParallelCorpus& corpus);

// Deterministic random split; |valid| = round(fraction * |corpus|). Relative
// order within each side is preserved.
std::pair<ParallelCorpus, ParallelCorpus> split(const ParallelCorpus& corpus,
                                                double valid_fraction, std::uint64_t seed);

// (T, S) view used to train backward models.
ParallelCorpus swapped(const ParallelCorpus& corpus);

std::vector<std::string> split_tokens(const std::string& line);
std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace nmt
