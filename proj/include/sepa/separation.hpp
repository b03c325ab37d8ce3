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

#ifndef SEPA_SEPARATION_HPP
#define SEPA_SEPARATION_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sepa/corpus.hpp"
#include "sepa/model.hpp"
#include "sepa/rng.hpp"
#include "sepa/tensor.hpp"

namespace sepa::separation {

// N mutually orthogonal block-indicator vectors of dimension m: vector i
// carries `scale` in slots [i*d, (i+1)*d) with d = floor(m/N) and zeros
// elsewhere, so distinct vectors never share a nonzero slot.
struct GroupSet {
  std::size_t n = 0;            // group count N
  std::size_t m = 0;            // embedding dimension
  std::size_t d = 0;            // block width floor(m/N)
  std::vector<Tensor> vectors;  // N constant tensors of shape {m}
};

// Builds the GroupSet; adding vector i to a context embedding tags the pair
// as belonging to group i. Requires 1 <= n <= m (otherwise d would be 0),
// violations are configuration errors.
GroupSet dialogue_augment(std::size_t m, std::size_t n, double scale = 1.0);

// The negated variational lower bound of one pair under one group vector,
// with the intermediate states kept so the selected group's latent and
// context can feed the contrastive losses without a second forward pass.
struct GroupLoss {
  Tensor loss;             // reconstruction + kl, a scalar graph node
  model::ElboParts parts;  // states for the (c + y_i, r) evaluation
};

// Evaluates the pair under every group vector with one shared epsilon
// (common random numbers), so the comparison across groups reflects the
// groups and not the sampling noise.
std::vector<GroupLoss> group_losses(const model::Model& model,
                                    const corpus::DialoguePair& pair,
                                    const GroupSet& groups,
                                    const std::vector<double>& eps);

// Row-wise winner-take-all over a batch x N loss table.
struct BlockingResult {
  std::vector<std::vector<int>> mask;  // batch x N of {0,1}, one 1 per row
  std::vector<std::size_t> selected;   // y+ (argmin column) per row
  Tensor masked_loss;  // sum over rows of loss * mask, a scalar graph node
};

// Per row the argmin-loss column gets mask 1 (ties resolve to the lowest
// index). Every entry is multiplied by its exact-zero-or-one mask before the
// sum, so gradients reach only the selected entries. A NaN loss raises a
// numeric error naming the offending row.
BlockingResult gradient_block(const std::vector<std::vector<Tensor>>& losses);

// Plain-value twin of gradient_block for table-level checks; same selection
// rule, returns the masked sum directly.
struct PlainBlocking {
  std::vector<std::vector<int>> mask;
  std::vector<std::size_t> selected;
  double masked_loss = 0.0;
};
PlainBlocking gradient_block_values(
    const std::vector<std::vector<double>>& losses);

// Contrastive pull of same-group generated responses toward each other:
// for each anchor i with at least one same-group partner,
//   a = sum over same-group others of rep_i . rep_j      (positives)
//   b = (sum over different-group others of rep_i . rep_k) / (n_groups - 1)
// and the anchor contributes softplus(b - a) = -log(e^a / (e^a + e^b)).
// Returns the mean over contributing anchors (zero when none contribute).
// n_groups == 1 is a configuration error (the negative term divides by
// n_groups - 1); fewer than two reps is a contract error.
// `average_positives` switches `a` to the mean over positives instead of the
// sum, for ablation.
Tensor relationship_enhancement_loss(const std::vector<Tensor>& reps,
                                     const std::vector<std::size_t>& groups,
                                     std::size_t n_groups,
                                     bool average_positives = false);

// Cross-entropy of the model's group-prediction head against the selected
// group; minimizing it teaches the head to recover y+ from the generated
// response alone.
Tensor group_prediction_loss(const model::Model& model, const Tensor& rep,
                             std::size_t y_plus);

// alpha(t) = min(1, t / warmup_batches): ramps the relationship-enhancement
// weight linearly over the first warmup_batches batches, then stays at 1.
struct AnnealSchedule {
  long long warmup_batches = 10000;

  double alpha(long long batch) const;
};

// One training-report row; loss_re is recorded before the alpha weighting
// so loss_total = loss_rec + loss_kl + alpha * loss_re + loss_y holds.
struct TrainRow {
  long long batch = 0;
  double alpha = 0.0;
  double loss_total = 0.0;
  double loss_rec = 0.0;
  double loss_kl = 0.0;
  double loss_re = 0.0;
  double loss_y = 0.0;
  double loss_bow = 0.0;               // auxiliary variants only, else 0
  std::vector<std::size_t> histogram;  // how often each group won y+
};

struct TotalLoss {
  Tensor loss;  // masked ELBO sum + alpha * L_re + L_Y
  TrainRow row;
  std::vector<std::size_t> selected;  // y+ per pair
};

// The full training objective for one batch: group_losses per pair (one
// epsilon drawn from `rng` per pair), gradient blocking across the batch,
// then the relationship-enhancement and group-prediction terms computed on
// the selected groups' soft generated responses. Batches of one pair skip
// the pairwise L_re term (there is nothing to contrast against).
TotalLoss total_loss(const model::Model& model,
                     const std::vector<corpus::DialoguePair>& batch,
                     const GroupSet& groups, const AnnealSchedule& schedule,
                     long long batch_index, Rng& rng,
                     bool average_positives = false);

}  // namespace sepa::separation

#endif  // SEPA_SEPARATION_HPP
