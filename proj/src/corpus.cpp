#include "nmt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "nmt/rng.hpp"

namespace nmt {

const char* provenance_kind_name(ProvenanceKind kind) {
  switch (kind) {
    case ProvenanceKind::Original: return "original";
    case ProvenanceKind::SyntheticForward: return "synthetic_forward";
    case ProvenanceKind::SyntheticBackward: return "synthetic_backward";
    case ProvenanceKind::MonolingualBackward: return "monolingual_backward";
  }
  return "?";
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// Pair key for dedup: tokens joined by spaces, sides joined by '\t'.
// Whitespace tokenization guarantees tokens contain neither.
std::string pair_key(const SentencePair& p) {
  std::string key = join_tokens(p.source);
  key += '\t';
  key += join_tokens(p.target);
  return key;
}

}  // namespace

LoadResult load_parallel(const std::string& source_path, const std::string& target_path,
                         const Provenance& provenance, const LoadOptions& options) {
  const auto src_lines = read_lines(source_path);
  const auto tgt_lines = read_lines(target_path);
  if (src_lines.size() != tgt_lines.size()) {
    throw std::runtime_error("line count mismatch " + std::to_string(src_lines.size()) + " vs " +
                             std::to_string(tgt_lines.size()) + " (" + source_path + ", " +
                             target_path + ")");
  }
  LoadResult result;
  result.corpus.name = source_path;
  result.corpus.pairs.reserve(src_lines.size());
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    SentencePair pair;
    pair.source = split_tokens(src_lines[i]);
    pair.target = split_tokens(tgt_lines[i]);
    pair.provenance = provenance;
    if (pair.source.empty() || pair.target.empty()) {
      if (options.drop_empty) {
        ++result.dropped;
        continue;
      }
      throw std::runtime_error("empty sentence at line " + std::to_string(i + 1) + " of " +
                               (pair.source.empty() ? source_path : target_path));
    }
    result.corpus.pairs.push_back(std::move(pair));
  }
  return result;
}

void save_parallel(const ParallelCorpus& corpus, const std::string& source_path,
                   const std::string& target_path) {
  std::ofstream src(source_path, std::ios::binary);
  std::ofstream tgt(target_path, std::ios::binary);
  if (!src) throw std::runtime_error("cannot write file: " + source_path);
  if (!tgt) throw std::runtime_error("cannot write file: " + target_path);
  for (const auto& pair : corpus.pairs) {
    src << join_tokens(pair.source) << '\n';
    tgt << join_tokens(pair.target) << '\n';
  }
  if (!src.good() || !tgt.good()) {
    throw std::runtime_error("write failed: " + source_path + ", " + target_path);
  }
}

ParallelCorpus merge_dedup(const std::vector<ParallelCorpus>& corpora) {
  if (corpora.empty()) throw std::invalid_argument("merge_dedup: need at least one corpus");
  ParallelCorpus merged;
  merged.name = corpora.front().name + "+merged";
  std::size_t union_size = 0;
  std::unordered_set<std::string> seen;
  for (const auto& corpus : corpora) {
    union_size += corpus.pairs.size();
    for (const auto& pair : corpus.pairs) {
      if (seen.insert(pair_key(pair)).second) {
        merged.pairs.push_back(pair);
      }
    }
  }
  merged.merged_union_size = union_size;
  return merged;
}

CorpusStats stats(const ParallelCorpus& corpus) {
  CorpusStats s;
  s.pairs = corpus.pairs.size();
  std::size_t src_total = 0, tgt_total = 0;
  for (const auto& pair : corpus.pairs) {
    switch (pair.provenance.kind) {
      case ProvenanceKind::Original: ++s.original; break;
      case ProvenanceKind::SyntheticForward: ++s.synthetic_forward; break;
      case ProvenanceKind::SyntheticBackward: ++s.synthetic_backward; break;
      case ProvenanceKind::MonolingualBackward: ++s.monolingual_backward; break;
    }
    src_total += pair.source.size();
    tgt_total += pair.target.size();
    s.max_source_len = std::max(s.max_source_len, pair.source.size());
    s.max_target_len = std::max(s.max_target_len, pair.target.size());
  }
  if (s.pairs > 0) {
    s.mean_source_len = static_cast<double>(src_total) / static_cast<double>(s.pairs);
    s.mean_target_len = static_cast<double>(tgt_total) / static_cast<double>(s.pairs);
  }
  if (corpus.merged_union_size > 0) {
    s.duplicate_rate =
        1.0 - static_cast<double>(s.pairs) / static_cast<double>(corpus.merged_union_size);
  }
  return s;
}

std::string CorpusStats::to_kv_block() const {
  std::ostringstream os;
  os << "pairs=" << pairs << '\n'
     << "original=" << original << '\n'
     << "synthetic_forward=" << synthetic_forward << '\n'
     << "synthetic_backward=" << synthetic_backward << '\n'
     << "monolingual_backward=" << monolingual_backward << '\n'
     << "duplicate_rate=" << duplicate_rate << '\n'
     << "mean_source_len=" << mean_source_len << '\n'
     << "mean_target_len=" << mean_target_len << '\n'
     << "max_source_len=" << max_source_len << '\n'
     << "max_target_len=" << max_target_len << '\n';
  return os.str();
}

std::string CorpusStats::to_csv() const {
  std::ostringstream os;
  os << "pairs,original,synthetic_forward,synthetic_backward,monolingual_backward,"
        "duplicate_rate,mean_source_len,mean_target_len,max_source_len,max_target_len\n"
     << pairs << ',' << original << ',' << synthetic_forward << ',' << synthetic_backward << ','
     << monolingual_backward << ',' << duplicate_rate << ',' << mean_source_len << ','
     << mean_target_len << ',' << max_source_len << ',' << max_target_len << '\n';
  return os.str();
}

std::pair<ParallelCorpus, ParallelCorpus> split(const ParallelCorpus& corpus,
                                                double valid_fraction, std::uint64_t seed) {
  if (corpus.empty()) throw std::invalid_argument("split: corpus is empty");
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) {
    throw std::invalid_argument("split: valid_fraction must be in (0,1)");
  }
  const std::size_t n = corpus.pairs.size();
  const std::size_t n_valid =
      static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<bool> in_valid(n, false);
  for (std::size_t i = 0; i < n_valid; ++i) in_valid[order[i]] = true;
  ParallelCorpus train, valid;
  train.name = corpus.name + ".train";
  valid.name = corpus.name + ".valid";
  for (std::size_t i = 0; i < n; ++i) {
    (in_valid[i] ? valid : train).pairs.push_back(corpus.pairs[i]);
  }
  return {std::move(train), std::move(valid)};
}

ParallelCorpus swapped(const ParallelCorpus& corpus) {
  ParallelCorpus out;
  out.name = corpus.name + ".swapped";
  out.pairs.reserve(corpus.pairs.size());
  for (const auto& pair : corpus.pairs) {
    SentencePair sp;
    sp.source = pair.target;
    sp.target = pair.source;
    sp.provenance = pair.provenance;
    out.pairs.push_back(std::move(sp));
  }
  return out;
}

}  // namespace nmt
