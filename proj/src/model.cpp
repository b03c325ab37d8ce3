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

#include "sepa/model.hpp"

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "sepa/error.hpp"

namespace sepa::model {

namespace {

constexpr std::uint64_t kStreamParamInit = 31;

// One fresh parameter tensor per call; `item` keeps streams independent so
// inserting a parameter never reshuffles the others.
Tensor init_param(Shape shape, std::uint64_t seed, std::uint64_t& item) {
  Rng rng = Rng::for_item(seed, kStreamParamInit, item++);
  return Tensor::uniform(std::move(shape), rng, -0.08, 0.08,
                         /*requires_grad=*/true);
}

GruCell init_gru(std::size_t in_dim, std::size_t hidden, std::uint64_t seed,
                 std::uint64_t& item) {
  GruCell c;
  c.w_z = init_param({hidden, in_dim}, seed, item);
  c.u_z = init_param({hidden, hidden}, seed, item);
  c.b_z = init_param({hidden}, seed, item);
  c.w_r = init_param({hidden, in_dim}, seed, item);
  c.u_r = init_param({hidden, hidden}, seed, item);
  c.b_r = init_param({hidden}, seed, item);
  c.w_h = init_param({hidden, in_dim}, seed, item);
  c.u_h = init_param({hidden, hidden}, seed, item);
  c.b_h = init_param({hidden}, seed, item);
  return c;
}

Tensor affine(const Tensor& w, const Tensor& x, const Tensor& b) {
  return add(matmul(w, x), b);
}

void append_gru_params(
    std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
    const std::vector<GruCell>& stack) {
  for (std::size_t l = 0; l < stack.size(); ++l) {
    const GruCell& c = stack[l];
    const std::string p = prefix + std::to_string(l) + ".";
    out.emplace_back(p + "w_z", c.w_z);
    out.emplace_back(p + "u_z", c.u_z);
    out.emplace_back(p + "b_z", c.b_z);
    out.emplace_back(p + "w_r", c.w_r);
    out.emplace_back(p + "u_r", c.u_r);
    out.emplace_back(p + "b_r", c.b_r);
    out.emplace_back(p + "w_h", c.w_h);
    out.emplace_back(p + "u_h", c.u_h);
    out.emplace_back(p + "b_h", c.b_h);
  }
}

}  // namespace

Tensor GruCell::step(const Tensor& x, const Tensor& h) const {
  Tensor u = sigmoid(add(affine(w_z, x, b_z), matmul(u_z, h)));
  Tensor r = sigmoid(add(affine(w_r, x, b_r), matmul(u_r, h)));
  Tensor n = tanh_op(add(affine(w_h, x, b_h), matmul(u_h, mul(r, h))));
  Tensor keep = add_const(scale(u, -1.0), 1.0);  // 1 - u
  return add(mul(keep, n), mul(u, h));
}

Tensor kl_diag_gauss(const Gaussian& q, const Gaussian& p) {
  // 0.5 (lv_p - lv_q) + 0.5 (var_q + (mu_q - mu_p)^2) e^{-lv_p} - 0.5, summed.
  Tensor dmu = sub(q.mu, p.mu);
  Tensor quad = add(exp_op(q.log_var), mul(dmu, dmu));
  Tensor inv_var_p = exp_op(scale(p.log_var, -1.0));
  Tensor per_dim = add(scale(sub(p.log_var, q.log_var), 0.5),
                       add_const(scale(mul(quad, inv_var_p), 0.5), -0.5));
  return sum(per_dim);
}

Model::Model(const ModelConfig& config, const corpus::EmbeddingMatrix& emb,
             std::uint64_t seed)
    : config_(config) {
  if (config.vocab_size < 5 || config.embed_dim == 0 || config.hidden == 0 ||
      config.latent == 0 || config.layers == 0 || config.max_len < 2 ||
      config.n_groups == 0 || config.mlp_hidden == 0) {
    throw ContractError("model config has a zero or undersized field");
  }
  if (emb.vocab_size != config.vocab_size || emb.dim != config.embed_dim) {
    throw ContractError("embedding matrix is " + std::to_string(emb.vocab_size) +
                        "x" + std::to_string(emb.dim) + " but the model wants " +
                        std::to_string(config.vocab_size) + "x" +
                        std::to_string(config.embed_dim));
  }

  const std::size_t v = config.vocab_size;
  const std::size_t m = config.embed_dim;
  const std::size_t h = config.hidden;
  const std::size_t dz = config.latent;

  embedding_ = Tensor::from({v, m}, emb.data, /*requires_grad=*/true);

  std::uint64_t item = 0;
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::size_t in_dim = (l == 0) ? m : h;
    ctx_gru_.push_back(init_gru(in_dim, h, seed, item));
    resp_gru_.push_back(init_gru(in_dim, h, seed, item));
    dec_gru_.push_back(init_gru(in_dim, h, seed, item));
    init_w_.push_back(init_param({h, dz + h}, seed, item));
    init_b_.push_back(init_param({h}, seed, item));
  }
  rec_w_ = init_param({2 * dz, 2 * h}, seed, item);
  rec_b_ = init_param({2 * dz}, seed, item);
  pri_w_ = init_param({2 * dz, h}, seed, item);
  pri_b_ = init_param({2 * dz}, seed, item);
  out_w_ = init_param({v, h}, seed, item);
  out_b_ = init_param({v}, seed, item);
  bow_w_ = init_param({v, dz + h}, seed, item);
  bow_b_ = init_param({v}, seed, item);
  mlp_w1_ = init_param({config.mlp_hidden, h}, seed, item);
  mlp_b1_ = init_param({config.mlp_hidden}, seed, item);
  mlp_w2_ = init_param({config.n_groups, config.mlp_hidden}, seed, item);
  mlp_b2_ = init_param({config.n_groups}, seed, item);
}

std::vector<std::pair<std::string, Tensor>> Model::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embedding", embedding_);
  append_gru_params(out, "ctx_gru", ctx_gru_);
  append_gru_params(out, "resp_gru", resp_gru_);
  append_gru_params(out, "dec_gru", dec_gru_);
  for (std::size_t l = 0; l < init_w_.size(); ++l) {
    out.emplace_back("dec_init" + std::to_string(l) + ".w", init_w_[l]);
    out.emplace_back("dec_init" + std::to_string(l) + ".b", init_b_[l]);
  }
  out.emplace_back("recognition.w", rec_w_);
  out.emplace_back("recognition.b", rec_b_);
  out.emplace_back("prior.w", pri_w_);
  out.emplace_back("prior.b", pri_b_);
  out.emplace_back("out_proj.w", out_w_);
  out.emplace_back("out_proj.b", out_b_);
  out.emplace_back("bow.w", bow_w_);
  out.emplace_back("bow.b", bow_b_);
  out.emplace_back("group_mlp.w1", mlp_w1_);
  out.emplace_back("group_mlp.b1", mlp_b1_);
  out.emplace_back("group_mlp.w2", mlp_w2_);
  out.emplace_back("group_mlp.b2", mlp_b2_);
  return out;
}

Tensor Model::embed_row(int token_id) const {
  if (token_id < 0 ||
      static_cast<std::size_t>(token_id) >= config_.vocab_size) {
    throw ContractError("token id " + std::to_string(token_id) +
                        " is outside the vocabulary of size " +
                        std::to_string(config_.vocab_size));
  }
  return row(embedding_, static_cast<std::size_t>(token_id));
}

Tensor Model::run_stack(const std::vector<GruCell>& stack,
                        const std::vector<Tensor>& inputs) const {
  if (inputs.empty()) {
    throw ContractError("cannot encode an empty sequence");
  }
  std::vector<Tensor> states(stack.size(),
                             Tensor::zeros({config_.hidden}));
  for (const Tensor& input : inputs) {
    Tensor x = input;
    for (std::size_t l = 0; l < stack.size(); ++l) {
      states[l] = stack[l].step(x, states[l]);
      x = states[l];
    }
  }
  return states.back();
}

Tensor Model::encode_context(const std::vector<int>& tokens,
                             const Tensor* group_vector) const {
  if (group_vector != nullptr &&
      group_vector->shape() != Shape{config_.embed_dim}) {
    throw ContractError("group vector must have size " +
                        std::to_string(config_.embed_dim));
  }
  std::vector<Tensor> embeds;
  embeds.reserve(tokens.size());
  for (int t : tokens) {
    Tensor e = embed_row(t);
    embeds.push_back(group_vector ? add(e, *group_vector) : e);
  }
  return run_stack(ctx_gru_, embeds);
}

Tensor Model::encode_response(const std::vector<int>& tokens) const {
  std::vector<Tensor> embeds;
  embeds.reserve(tokens.size());
  for (int t : tokens) embeds.push_back(embed_row(t));
  return run_stack(resp_gru_, embeds);
}

Tensor Model::encode_embedded_response(
    const std::vector<Tensor>& embeds) const {
  for (const Tensor& e : embeds) {
    if (e.shape() != Shape{config_.embed_dim}) {
      throw ContractError("response embedding vectors must have size " +
                          std::to_string(config_.embed_dim));
    }
  }
  return run_stack(resp_gru_, embeds);
}

Gaussian Model::recognition(const Tensor& context_state,
                            const Tensor& response_state) const {
  Tensor a = affine(rec_w_, concat(context_state, response_state), rec_b_);
  return {slice(a, 0, config_.latent), slice(a, config_.latent, config_.latent)};
}

Gaussian Model::prior(const Tensor& context_state) const {
  Tensor a = affine(pri_w_, context_state, pri_b_);
  return {slice(a, 0, config_.latent), slice(a, config_.latent, config_.latent)};
}

Latent Model::sample_latent(const Gaussian& g, Rng& rng) const {
  std::vector<double> eps(config_.latent);
  for (double& e : eps) e = rng.normal();
  Tensor z = latent_from_eps(g, eps);
  return {z, std::move(eps)};
}

Tensor Model::latent_from_eps(const Gaussian& g,
                              const std::vector<double>& eps) const {
  if (eps.size() != config_.latent) {
    throw ContractError("epsilon must have size " +
                        std::to_string(config_.latent));
  }
  Tensor sigma = exp_op(scale(g.log_var, 0.5));
  Tensor noise = Tensor::from({config_.latent}, eps);  // constant: no gradient
  return add(g.mu, mul(sigma, noise));
}

std::vector<Tensor> Model::decoder_states(
    const Tensor& z, const Tensor& context_state,
    const std::vector<int>& target) const {
  if (target.empty()) {
    throw ContractError("decoder target must contain at least one token");
  }
  Tensor zc = concat(z, context_state);
  std::vector<Tensor> states;
  states.reserve(config_.layers);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    states.push_back(affine(init_w_[l], zc, init_b_[l]));
  }
  std::vector<Tensor> tops;
  tops.reserve(target.size());
  Tensor input = embed_row(corpus::kBos);
  for (std::size_t t = 0; t < target.size(); ++t) {
    Tensor x = input;
    for (std::size_t l = 0; l < config_.layers; ++l) {
      states[l] = dec_gru_[l].step(x, states[l]);
      x = states[l];
    }
    tops.push_back(states.back());
    if (t + 1 < target.size()) input = embed_row(target[t]);
  }
  return tops;
}

Tensor Model::decode_teacher_logprob(const Tensor& z,
                                     const Tensor& context_state,
                                     const std::vector<int>& target) const {
  std::vector<Tensor> tops = decoder_states(z, context_state, target);
  Tensor nll = Tensor::zeros({});
  for (std::size_t t = 0; t < target.size(); ++t) {
    Tensor logits = affine(out_w_, tops[t], out_b_);
    nll = add(nll, softmax_cross_entropy(logits,
                                         static_cast<std::size_t>(target[t])));
  }
  return scale(nll, -1.0);
}

std::vector<int> Model::decode_greedy(const Tensor& z,
                                      const Tensor& context_state) const {
  Tensor zc = concat(z, context_state);
  std::vector<Tensor> states;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    states.push_back(affine(init_w_[l], zc, init_b_[l]));
  }
  std::vector<int> out;
  Tensor input = embed_row(corpus::kBos);
  while (out.size() < config_.max_len) {
    Tensor x = input;
    for (std::size_t l = 0; l < config_.layers; ++l) {
      states[l] = dec_gru_[l].step(x, states[l]);
      x = states[l];
    }
    Tensor logits = affine(out_w_, states.back(), out_b_);
    const std::vector<double>& v = logits.data();
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (v[i] > v[best]) best = i;  // ties keep the lowest token id
    }
    out.push_back(static_cast<int>(best));
    if (best == corpus::kEos) break;
    input = embed_row(static_cast<int>(best));
  }
  return out;
}

std::vector<Tensor> Model::soft_response_embeddings(
    const Tensor& z, const Tensor& context_state,
    const std::vector<int>& target) const {
  std::vector<Tensor> tops = decoder_states(z, context_state, target);
  std::vector<Tensor> embeds;
  embeds.reserve(tops.size());
  for (const Tensor& h : tops) {
    Tensor probs = softmax(affine(out_w_, h, out_b_));
    embeds.push_back(matmul(probs, embedding_));  // E^T p, size m
  }
  return embeds;
}

ElboParts Model::elbo(const corpus::DialoguePair& pair,
                      const Tensor* group_vector,
                      const std::vector<double>& eps) const {
  if (pair.context.empty() || pair.response.empty()) {
    throw ContractError("dialogue pair " + std::to_string(pair.pair_id) +
                        " has an empty side");
  }
  ElboParts parts;
  parts.context_state = encode_context(pair.context, group_vector);
  parts.response_state = encode_response(pair.response);
  parts.q = recognition(parts.context_state, parts.response_state);
  parts.p = prior(parts.context_state);
  parts.z = latent_from_eps(parts.q, eps);
  Tensor logprob = decode_teacher_logprob(parts.z, parts.context_state,
                                          pair.response);
  parts.reconstruction = scale(logprob, -1.0);
  parts.kl = kl_diag_gauss(parts.q, parts.p);
  return parts;
}

Tensor Model::bow_loss(const Tensor& z, const Tensor& context_state,
                       const std::vector<int>& target) const {
  if (target.empty()) {
    throw ContractError("bag-of-words target must contain at least one token");
  }
  Tensor logits = affine(bow_w_, concat(z, context_state), bow_b_);
  Tensor total = Tensor::zeros({});
  for (int t : target) {
    total = add(total,
                softmax_cross_entropy(logits, static_cast<std::size_t>(t)));
  }
  return total;
}

Tensor Model::group_logits(const Tensor& response_feature) const {
  Tensor hidden = tanh_op(affine(mlp_w1_, response_feature, mlp_b1_));
  return affine(mlp_w2_, hidden, mlp_b2_);
}

double Model::pair_nll_prior_mean(const corpus::DialoguePair& pair,
                                  const Tensor* group_vector) const {
  Tensor ctx = encode_context(pair.context, group_vector);
  Gaussian p = prior(ctx);
  Tensor z = latent_from_eps(p, std::vector<double>(config_.latent, 0.0));
  Tensor logprob = decode_teacher_logprob(z, ctx, pair.response);
  return -logprob.value();
}

}  // namespace sepa::model
