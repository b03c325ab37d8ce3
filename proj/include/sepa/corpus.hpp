// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SEPA_CORPUS_HPP
#define SEPA_CORPUS_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace sepa::corpus {

// Reserved vocabulary slots, fixed in this order forever (checkpoints and
// encoded corpora depend on the numbering).
inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kBos = 2;
inline constexpr int kEos = 3;
inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kBosToken = "<bos>";
inline constexpr const char* kEosToken = "<eos>";

// Token <-> id bijection over non-reserved entries; ids 0..3 are PAD, UNK,
// BOS, EOS in that order.
class Vocab {
 public:
  Vocab();

  // Adds a token if absent; returns its id either way. Reserved literals map
  // to their fixed slots.
  int add(const std::string& token);
  // UNK for unknown tokens.
  int id_of(const std::string& token) const;
  bool contains(const std::string& token) const;
  const std::string& token_of(int id) const;  // throws on out-of-range id
  std::size_t size() const { return id_to_token_.size(); }

  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

using StringPair = std::pair<std::string, std::string>;  // context, response

// One encoded single-turn exchange. Both sequences end with EOS and contain
// no PAD; both are capped at max_len with the terminal EOS preserved.
struct DialoguePair {
  std::vector<int> context;
  std::vector<int> response;
  int pair_id = 0;
};

// Dense |V| x m matrix, row-major; PAD row is all zeros.
struct EmbeddingMatrix {
  std::size_t vocab_size = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  double at(std::size_t row, std::size_t col) const {
    return data[row * dim + col];
  }
};

// One-to-many census of a pair list grouped by exact context string.
struct CorpusStats {
  std::size_t pair_count = 0;
  std::size_t multi_response_contexts = 0;   // contexts with >= 2 distinct responses
  std::size_t max_responses_per_context = 0; // over distinct responses; 0 iff empty
};

// Lowercased whitespace tokenization; the only scheme used anywhere.
std::vector<std::string> tokenize(const std::string& line);

// u_1..u_T -> [(u_1,u_2), ..., (u_{T-1},u_T)]; fewer than two utterances
// yield an empty list.
std::vector<StringPair> extract_single_turn(
    const std::vector<std::string>& utterances);

enum class FilterMode {
  drop,        // discard pairs containing out-of-list tokens
  replace_unk  // keep pairs, rewrite offending tokens to <unk>
};

struct FilterResult {
  std::vector<StringPair> pairs;
  std::size_t dropped = 0;   // pairs removed (drop mode)
  std::size_t replaced = 0;  // tokens rewritten (replace_unk mode)
};

FilterResult filter_by_token_list(
    const std::vector<StringPair>& pairs,
    const std::unordered_set<std::string>& allowed_tokens,
    FilterMode mode = FilterMode::drop);

CorpusStats count_one_to_many(const std::vector<StringPair>& pairs);

// ---------------------------------------------------------------------------
// synthetic corpus
// ---------------------------------------------------------------------------

struct SyntheticConfig {
  std::uint64_t seed = 7;
  int n_contexts = 667;
  // branching_weights[k] is the relative weight of a context having k+1
  // responses; fixed_branching(b) puts all mass on b.
  std::vector<double> branching_weights{0.0, 0.0, 1.0};
  double sharing = 0.3;  // probability a response is reused across contexts
  int vocab_size = 256;  // distinct surface tokens the generator may emit
  int n_families = 4;    // response template families (= ground-truth groups)

  static std::vector<double> fixed_branching(int b);
};

struct SyntheticCorpus {
  std::vector<StringPair> pairs;
  std::vector<int> labels;  // pairs[i]'s response family, in [0, n_families)
  CorpusStats stats;
  int n_families = 0;
};

// Deterministic under (config.seed, config); responses come from disjoint
// per-family token pools, so the family label is the ground-truth response
// cluster. Sharing reuses earlier responses of the same family verbatim,
// which manufactures many-to-one pairs on top of the one-to-many branching.
SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config);

// ---------------------------------------------------------------------------
// vocabulary and encoding
// ---------------------------------------------------------------------------

// Most frequent tokens first (ties broken lexicographically), capped at
// max_size entries including the four reserved slots.
Vocab build_vocab(const std::vector<StringPair>& pairs, std::size_t max_size);

// Appends EOS; truncates to max_len keeping the terminal EOS. max_len must
// be at least 2 (one content token plus EOS).
std::vector<int> encode(const Vocab& vocab, const std::vector<std::string>& tokens,
                        std::size_t max_len);

DialoguePair encode_pair(const Vocab& vocab, const StringPair& pair,
                         std::size_t max_len, int pair_id);

// Surface form, skipping PAD/BOS/EOS; UNK renders as its literal.
std::string decode(const Vocab& vocab, const std::vector<int>& ids);

// ---------------------------------------------------------------------------
// embeddings
// ---------------------------------------------------------------------------

// Text layout: one token per line followed by `dim` space-separated reals.
// Tokens absent from the file are drawn uniformly from [-0.1, 0.1] under
// `seed`; the PAD row is forced to zeros. Malformed or inconsistent lines
// raise data errors naming the line number.
EmbeddingMatrix load_embeddings(const std::string& path, const Vocab& vocab,
                                std::size_t dim, std::uint64_t seed);

// All-random fallback when no embedding file is configured.
EmbeddingMatrix random_embeddings(const Vocab& vocab, std::size_t dim,
                                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// file I/O
// ---------------------------------------------------------------------------

// One dialogue per line, utterances separated by single TABs.
std::vector<std::vector<std::string>> read_dialogue_file(
    const std::string& path);

// One "context<TAB>response" per line.
std::vector<StringPair> read_pair_file(const std::string& path);
void write_pair_file(const std::string& path,
                     const std::vector<StringPair>& pairs);

// One integer label per line, aligned with the pair file.
std::vector<int> read_label_file(const std::string& path);
void write_label_file(const std::string& path, const std::vector<int>& labels);

}  // namespace sepa::corpus

#endif  // SEPA_CORPUS_HPP
