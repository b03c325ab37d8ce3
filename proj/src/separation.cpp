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

#include "sepa/separation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sepa/error.hpp"

namespace sepa::separation {

GroupSet dialogue_augment(std::size_t m, std::size_t n, double scale) {
  if (n == 0 || m == 0) {
    throw UsageError("group count and embedding dimension must be positive");
  }
  if (n > m) {
    throw UsageError("cannot fit " + std::to_string(n) +
                     " orthogonal group vectors into dimension " +
                     std::to_string(m) + " (block width would be 0)");
  }
  GroupSet gs;
  gs.n = n;
  gs.m = m;
  gs.d = m / n;
  gs.vectors.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(m, 0.0);
    for (std::size_t k = i * gs.d; k < (i + 1) * gs.d; ++k) v[k] = scale;
    gs.vectors.push_back(Tensor::from({m}, std::move(v)));
  }
  return gs;
}

std::vector<GroupLoss> group_losses(const model::Model& model,
                                    const corpus::DialoguePair& pair,
                                    const GroupSet& groups,
                                    const std::vector<double>& eps) {
  std::vector<GroupLoss> out;
  out.reserve(groups.n);
  for (std::size_t i = 0; i < groups.n; ++i) {
    model::ElboParts parts = model.elbo(pair, &groups.vectors[i], eps);
    out.push_back({add(parts.reconstruction, parts.kl), std::move(parts)});
  }
  return out;
}

namespace {

// Shared selection walk: per row the first strictly-smaller entry wins, so
// ties fall to the lowest index.
template <typename Table, typename Value>
std::vector<std::size_t> select_argmin(const Table& losses, Value value) {
  if (losses.empty()) {
    throw ContractError("gradient blocking needs at least one row");
  }
  const std::size_t n = losses.front().size();
  std::vector<std::size_t> selected;
  selected.reserve(losses.size());
  for (std::size_t r = 0; r < losses.size(); ++r) {
    if (losses[r].size() != n || n == 0) {
      throw ContractError("loss table rows must share a positive width");
    }
    std::size_t best = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const double v = value(losses[r][c]);
      if (std::isnan(v)) {
        throw NumericError("NaN loss in gradient blocking at row " +
                           std::to_string(r));
      }
      if (v < value(losses[r][best])) best = c;
    }
    selected.push_back(best);
  }
  return selected;
}

std::vector<std::vector<int>> mask_from(
    const std::vector<std::size_t>& selected, std::size_t n) {
  std::vector<std::vector<int>> mask(selected.size(), std::vector<int>(n, 0));
  for (std::size_t r = 0; r < selected.size(); ++r) mask[r][selected[r]] = 1;
  return mask;
}

}  // namespace

BlockingResult gradient_block(const std::vector<std::vector<Tensor>>& losses) {
  std::vector<std::size_t> selected =
      select_argmin(losses, [](const Tensor& t) { return t.value(); });
  const std::size_t n = losses.front().size();
  BlockingResult result;
  result.mask = mask_from(selected, n);
  result.selected = std::move(selected);
  // Multiply every entry by its 0/1 mask before summing: the exact zeros
  // sever the gradient path of unselected entries while keeping them in the
  // graph, and adding 0.0 leaves the selected sum bit-identical.
  Tensor acc = Tensor::zeros({});
  for (std::size_t r = 0; r < losses.size(); ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      acc = add(acc, scale(losses[r][c], result.mask[r][c] ? 1.0 : 0.0));
    }
  }
  result.masked_loss = acc;
  return result;
}

PlainBlocking gradient_block_values(
    const std::vector<std::vector<double>>& losses) {
  std::vector<std::size_t> selected =
      select_argmin(losses, [](double v) { return v; });
  PlainBlocking result;
  result.mask = mask_from(selected, losses.front().size());
  result.selected = std::move(selected);
  for (std::size_t r = 0; r < losses.size(); ++r) {
    result.masked_loss += losses[r][result.selected[r]];
  }
  return result;
}

Tensor relationship_enhancement_loss(const std::vector<Tensor>& reps,
                                     const std::vector<std::size_t>& groups,
                                     std::size_t n_groups,
                                     bool average_positives) {
  if (n_groups < 2) {
    throw UsageError(
        "relationship enhancement needs at least two groups (the negative "
        "term divides by the group count minus one)");
  }
  if (reps.size() < 2 || reps.size() != groups.size()) {
    throw ContractError("relationship enhancement needs two or more "
                        "response features with matching group labels");
  }
  Tensor total = Tensor::zeros({});
  std::size_t anchors = 0;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    Tensor a = Tensor::zeros({});
    Tensor b = Tensor::zeros({});
    std::size_t positives = 0;
    for (std::size_t j = 0; j < reps.size(); ++j) {
      if (j == i) continue;
      Tensor dot = matmul(reps[i], reps[j]);
      if (groups[j] == groups[i]) {
        a = add(a, dot);
        ++positives;
      } else {
        b = add(b, dot);
      }
    }
    if (positives == 0) continue;  // nothing to pull this anchor toward
    if (average_positives) {
      a = scale(a, 1.0 / static_cast<double>(positives));
    }
    b = scale(b, 1.0 / static_cast<double>(n_groups - 1));
    // -log(e^a / (e^a + e^b)) = log(1 + e^{b-a}), evaluated stably.
    total = add(total, softplus(sub(b, a)));
    ++anchors;
  }
  if (anchors == 0) return Tensor::zeros({});
  return scale(total, 1.0 / static_cast<double>(anchors));
}

Tensor group_prediction_loss(const model::Model& model, const Tensor& rep,
                             std::size_t y_plus) {
  if (y_plus >= model.config().n_groups) {
    throw ContractError("group index " + std::to_string(y_plus) +
                        " is outside the " +
                        std::to_string(model.config().n_groups) +
                        " configured groups");
  }
  return softmax_cross_entropy(model.group_logits(rep), y_plus);
}

double AnnealSchedule::alpha(long long batch) const {
  if (batch < 0) {
    throw ContractError("batch index must be nonnegative");
  }
  if (warmup_batches <= 0) return 1.0;  // no warmup requested
  return std::min(1.0, static_cast<double>(batch) /
                           static_cast<double>(warmup_batches));
}

TotalLoss total_loss(const model::Model& model,
                     const std::vector<corpus::DialoguePair>& batch,
                     const GroupSet& groups, const AnnealSchedule& schedule,
                     long long batch_index, Rng& rng,
                     bool average_positives) {
  if (batch.empty()) {
    throw ContractError("cannot compute a loss over an empty batch");
  }
  const std::size_t dz = model.config().latent;

  // One epsilon per pair, shared across that pair's N group evaluations.
  std::vector<std::vector<GroupLoss>> table;
  table.reserve(batch.size());
  for (const corpus::DialoguePair& pair : batch) {
    std::vector<double> eps(dz);
    for (double& e : eps) e = rng.normal();
    table.push_back(group_losses(model, pair, groups, eps));
  }

  std::vector<std::vector<Tensor>> loss_table(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    for (const GroupLoss& gl : table[r]) loss_table[r].push_back(gl.loss);
  }
  BlockingResult blocked = gradient_block(loss_table);

  // The selected group's soft generated response, re-encoded as f(x').
  std::vector<Tensor> reps;
  reps.reserve(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const model::ElboParts& parts = table[r][blocked.selected[r]].parts;
    std::vector<Tensor> soft = model.soft_response_embeddings(
        parts.z, parts.context_state, batch[r].response);
    reps.push_back(model.encode_embedded_response(soft));
  }

  const double alpha = schedule.alpha(batch_index);
  Tensor re = batch.size() >= 2
                  ? relationship_enhancement_loss(reps, blocked.selected,
                                                  groups.n, average_positives)
                  : Tensor::zeros({});
  Tensor y = Tensor::zeros({});
  for (std::size_t r = 0; r < batch.size(); ++r) {
    y = add(y, group_prediction_loss(model, reps[r], blocked.selected[r]));
  }
  y = scale(y, 1.0 / static_cast<double>(batch.size()));

  TotalLoss result;
  result.loss = add(blocked.masked_loss, add(scale(re, alpha), y));
  result.selected = blocked.selected;

  TrainRow& row = result.row;
  row.batch = batch_index;
  row.alpha = alpha;
  row.loss_total = result.loss.value();
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const model::ElboParts& parts = table[r][blocked.selected[r]].parts;
    row.loss_rec += parts.reconstruction.value();
    row.loss_kl += parts.kl.value();
  }
  row.loss_re = re.value();
  row.loss_y = y.value();
  row.histogram.assign(groups.n, 0);
  for (std::size_t s : blocked.selected) ++row.histogram[s];
  return result;
}

}  // namespace sepa::separation
