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

#ifndef SEPA_METRICS_HPP
#define SEPA_METRICS_HPP

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sepa/corpus.hpp"

namespace sepa::metrics {

// ---------------------------------------------------------------------------
// surface-overlap metrics
// ---------------------------------------------------------------------------

// Unique n-grams across all responses divided by the total n-gram count;
// 0 when no n-grams exist at all. Text is tokenized with the corpus scheme.
double distinct_n(const std::vector<std::string>& responses, int n);

// Sentence BLEU: geometric mean of modified k-gram precisions for k = 1..n
// with the standard brevity penalty. Any precision whose raw clipped count
// is zero (including candidates shorter than k) is smoothed to
// (0 + 1) / (total + 1) so short sentences never hard-zero the score.
double bleu_n(const std::string& candidate, const std::string& reference,
              int n);

// ---------------------------------------------------------------------------
// embedding metrics
// ---------------------------------------------------------------------------

// Cosine of the mean token-embedding vectors of the two sentences, with PAD
// and UNK (and all out-of-vocabulary tokens) excluded. When either side has
// no eligible tokens the pair cannot be scored and the result is absent.
std::optional<double> embedding_average(const std::string& candidate,
                                        const std::string& reference,
                                        const corpus::Vocab& vocab,
                                        const corpus::EmbeddingMatrix& emb);

// Same construction between a context and its generated response.
std::optional<double> coherence(const std::string& context,
                                const std::string& response,
                                const corpus::Vocab& vocab,
                                const corpus::EmbeddingMatrix& emb);

// Plain cosine; defined as 0 when either vector has zero norm so that every
// caller stays inside [-1, 1].
double cosine(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------------------
// latent geometry
// ---------------------------------------------------------------------------

// Per-batch geometry summary. inner_dis averages, over examples that have at
// least one same-group peer, the mean cosine to those peers; inter_dis does
// the same across groups. A side with no eligible example is absent (e.g.
// a single-group batch has no inter_dis).
struct GeometryResult {
  std::optional<double> inner_dis;
  std::optional<double> inter_dis;
};

// Labeled mode: same group <=> equal group id.
GeometryResult geometry_batch(const std::vector<std::vector<double>>& vectors,
                              const std::vector<int>& groups);

// Baseline threshold mode: "same group" is the pairwise predicate
// cosine >= threshold, evaluated per pair (it is not a partition).
GeometryResult geometry_batch_threshold(
    const std::vector<std::vector<double>>& vectors, double threshold = 0.9);

struct GeometryReport {
  std::vector<GeometryResult> batches;
  std::optional<double> mean_inner;  // over batches where present
  std::optional<double> mean_inter;
};

GeometryReport summarize_geometry(std::vector<GeometryResult> batches);

// CSV layout: header "batch,inner_dis,inter_dis", absent values as "nan".
void write_geometry_csv(std::ostream& os, const GeometryReport& report);

// ---------------------------------------------------------------------------
// perplexity and the evaluation report
// ---------------------------------------------------------------------------

// exp(total negative log likelihood / total target tokens). The caller
// accumulates teacher-forced NLL; this is the only place the formula lives.
double perplexity_from_totals(double total_nll, std::size_t total_tokens);

struct EvalReport {
  double ppl = 0.0;
  double distinct_1 = 0.0;
  double distinct_2 = 0.0;
  double mean_length = 0.0;  // mean generated-response token count
  double bleu_1 = 0.0;
  double bleu_2 = 0.0;
  double bleu_3 = 0.0;
  std::optional<double> embedding_average;
  std::optional<double> coherence;
  std::size_t pairs_evaluated = 0;
  std::size_t pairs_skipped_embedding = 0;  // no eligible tokens on a side
};

// Flat JSON object, one key per field; absent optionals serialize as null.
void write_eval_report_json(std::ostream& os, const EvalReport& report);
EvalReport read_eval_report_json(std::istream& is);

}  // namespace sepa::metrics

#endif  // SEPA_METRICS_HPP
