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

#ifndef SEPA_RUNNER_HPP
#define SEPA_RUNNER_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sepa/corpus.hpp"
#include "sepa/metrics.hpp"
#include "sepa/model.hpp"
#include "sepa/separation.hpp"
#include "sepa/tensor.hpp"

namespace sepa::runner {

enum class Variant { seq2seq, cvae, cvae_bow, kmeans_cvae_bow, sepacvae };

Variant variant_from_string(const std::string& name);  // usage error if unknown
std::string to_string(Variant v);

struct RunConfig {
  Variant variant = Variant::sepacvae;
  std::size_t n_groups = 4;   // N (also K for the k-means baseline)
  std::size_t embed_dim = 32;  // m
  std::size_t hidden = 32;
  std::size_t latent = 16;
  std::size_t layers = 1;
  std::size_t max_len = 25;
  std::size_t batch_size = 16;
  double learning_rate = 0.001;
  std::size_t epochs = 50;
  long long warmup_batches = 10000;
  std::uint64_t seed = 7;
  std::size_t max_vocab = 512;
  double group_scale = 1.0;          // magnitude of the group-vector blocks
  bool re_average_positives = false; // ablation switch for L_re positives
  std::string corpus_path;       // context TAB response, one pair per line
  std::string labels_path;       // optional per-pair family labels
  std::string embeddings_path;   // optional GloVe-style text embeddings
  std::string output_dir = ".";
};

// Flat key = value file with '#' comments and blank lines; unknown keys and
// malformed values are usage errors naming the line.
RunConfig load_config(const std::string& path);
// One key = value assignment (shared by the file parser and CLI overrides).
void apply_setting(RunConfig& config, const std::string& key,
                   const std::string& value);
// Cross-field checks, e.g. sepacvae requires n_groups >= 2 and
// n_groups <= embed_dim; violations are usage errors.
void validate(const RunConfig& config);
// The key = value echo stored in checkpoints.
std::map<std::string, std::string> config_echo(const RunConfig& config);

// Deterministic split by pair position: i % 10 == 8 -> validation,
// i % 10 == 9 -> test, everything else trains.
struct DataSplits {
  std::vector<corpus::DialoguePair> train, val, test;
};
DataSplits split_pairs(const std::vector<corpus::DialoguePair>& pairs);

// Everything the trainer and evaluator share: vocabulary, encoded splits,
// and the embedding table.
struct Dataset {
  corpus::Vocab vocab;
  corpus::EmbeddingMatrix embeddings;
  DataSplits splits;
};
Dataset load_dataset(const RunConfig& config);

// Adam with bias correction; update order is the parameter list order, so
// identical gradients yield identical updates.
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor>> params, double lr,
       double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step();       // applies one update from the accumulated gradients
  void zero_grad();  // clears gradients on every registered parameter

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
};

// Lloyd's algorithm over per-pair mean context embeddings, K = n_groups,
// a fixed iteration budget, and seeded initialization; ties in assignment
// go to the lowest centroid index. Centroids ride along in checkpoints so
// evaluation can cluster unseen contexts.
struct KMeansResult {
  Tensor centroids;                     // {K, m}, not trainable
  std::vector<std::size_t> assignment;  // one cluster per input pair
};
KMeansResult kmeans_contexts(const std::vector<corpus::DialoguePair>& pairs,
                             const corpus::EmbeddingMatrix& emb,
                             std::size_t k, std::uint64_t seed,
                             int iterations = 20);
std::size_t nearest_centroid(const Tensor& centroids,
                             const std::vector<double>& point);
std::vector<double> mean_context_embedding(const corpus::DialoguePair& pair,
                                           const corpus::EmbeddingMatrix& emb);

// Add-one-smoothed unigram language model fit on the training targets
// (terminal EOS included), scored on the evaluation targets: the floor any
// sequence model has to beat.
double unigram_ppl(const std::vector<corpus::DialoguePair>& train,
                   const std::vector<corpus::DialoguePair>& eval,
                   std::size_t vocab_size);

// The group whose augmented context yields the best variational lower bound
// for this pair (epsilon = 0, so the choice is deterministic); equals the
// gradient-blocking argmin over the same losses.
std::size_t select_group_validation(const model::Model& model,
                                    const corpus::DialoguePair& pair,
                                    const separation::GroupSet& groups);

// Decodes one candidate per group from the prior-mean latent, re-encodes
// each candidate, and keeps the one whose encoding has the highest cosine
// against the bare context encoding (ties -> lowest group index).
struct TestSelection {
  std::vector<int> response;
  std::size_t group = 0;
  double cosine = 0.0;
};
TestSelection select_response_test(const model::Model& model,
                                   const std::vector<int>& context,
                                   const separation::GroupSet& groups);

struct TrainArtifacts {
  std::string checkpoint_path;
  std::string report_path;
  double best_val_ppl = 0.0;
  long long total_batches = 0;
};

// Full training run: streams the per-batch report CSV and checkpoints at
// every new validation-perplexity minimum. Deterministic in (config, seed).
TrainArtifacts train(const RunConfig& config);

// Loads the checkpoint, runs the split's selection protocol, decodes
// greedily, computes the metric suite, and writes the report JSON plus a
// generations file (context TAB response TAB group per line). `split` is
// "val" or "test".
metrics::EvalReport evaluate(const RunConfig& config,
                             const std::string& checkpoint_path,
                             const std::string& split,
                             const std::string& generations_path,
                             const std::string& report_path);

// Latent-space export and inner/inter-group cosine analysis over the
// validation split: writes one CSV row per pair (pair_id, group, z_*) and a
// per-batch geometry CSV. Grouped variants use their selected groups;
// ungrouped variants fall back to the cosine >= 0.9 pairing rule. Returns
// the geometry summary alongside the fraction of probed pairs whose decoded
// output changes when z is perturbed (a diagnostic, not an assertion).
struct LatentAnalysis {
  metrics::GeometryReport geometry;
  double z_sensitivity = 0.0;  // share of probes where z changed the output
  std::size_t pairs = 0;
};
LatentAnalysis analyze_latent(const RunConfig& config,
                              const std::string& checkpoint_path,
                              const std::string& latent_csv_path,
                              const std::string& geometry_csv_path);

}  // namespace sepa::runner

#endif  // SEPA_RUNNER_HPP
