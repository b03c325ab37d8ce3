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

#ifndef SEPA_MODEL_HPP
#define SEPA_MODEL_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sepa/corpus.hpp"
#include "sepa/rng.hpp"
#include "sepa/tensor.hpp"

namespace sepa::model {

struct ModelConfig {
  std::size_t vocab_size = 0;  // set from the vocabulary
  std::size_t embed_dim = 32;  // m
  std::size_t hidden = 32;     // h
  std::size_t latent = 16;     // d_z
  std::size_t layers = 1;      // GRU stack depth (paper scale uses 2)
  std::size_t max_len = 25;
  std::size_t n_groups = 4;    // N, output width of the group-prediction head
  std::size_t mlp_hidden = 32; // hidden width of the group-prediction head
};

// Diagonal Gaussian in (mu, log variance) parameterization; sigma
// = exp(log_var / 2) is positive by construction.
struct Gaussian {
  Tensor mu;       // {d_z}
  Tensor log_var;  // {d_z}
};

// A reparameterized draw along with the noise that produced it, so the same
// epsilon can be replayed for common-random-number comparisons.
struct Latent {
  Tensor z;                    // {d_z} = mu + exp(log_var/2) * eps
  std::vector<double> epsilon; // the standard-normal draw used
};

// One GRU layer's weights. step() computes, with x the layer input and h
// the previous hidden state:
//   u = sigmoid(W_z x + U_z h + b_z)        (update gate)
//   r = sigmoid(W_r x + U_r h + b_r)        (reset gate)
//   n = tanh(W_h x + U_h (r * h) + b_h)     (candidate)
//   h' = (1 - u) * n + u * h
struct GruCell {
  Tensor w_z, u_z, b_z;
  Tensor w_r, u_r, b_r;
  Tensor w_h, u_h, b_h;

  Tensor step(const Tensor& x, const Tensor& h) const;
};

// Sum over dimensions of the per-dimension closed form
//   log(sigma_p/sigma_q) + (sigma_q^2 + (mu_q - mu_p)^2) / (2 sigma_p^2) - 1/2
// assembled from differentiable primitives.
Tensor kl_diag_gauss(const Gaussian& q, const Gaussian& p);

// Per-pair ELBO pieces, kept separate so callers can weight, anneal, or
// block them; intermediate states are exposed for reuse by the separation
// losses (the response encoding doubles as a contrastive feature).
struct ElboParts {
  Tensor reconstruction;  // -sum log p(x_t | ...), teacher forced, >= 0
  Tensor kl;              // KL(recognition || prior), >= 0
  Gaussian q;             // recognition output
  Gaussian p;             // prior output
  Tensor context_state;   // encoder state actually used (group vector applied)
  Tensor response_state;  // response encoder state
  Tensor z;               // the latent actually decoded from
};

class Model {
 public:
  // Parameters are initialized uniformly in [-0.08, 0.08] from `seed`,
  // except the embedding which copies `emb` (and stays trainable).
  Model(const ModelConfig& config, const corpus::EmbeddingMatrix& emb,
        std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // Stable name -> tensor view of every trainable parameter, in a fixed
  // order; optimizers and checkpoints index by these names.
  std::vector<std::pair<std::string, Tensor>> named_params() const;

  // ---- encoders -----------------------------------------------------------

  // Final hidden state of the context GRU stack; when `group_vector` (size m)
  // is given it is added to every token embedding before encoding.
  Tensor encode_context(const std::vector<int>& tokens,
                        const Tensor* group_vector = nullptr) const;

  // Final hidden state of the response GRU stack over token embeddings.
  Tensor encode_response(const std::vector<int>& tokens) const;

  // Same response encoder run on already-built embedding vectors (size m
  // each); this is f(.) applied to a differentiable generated response.
  Tensor encode_embedded_response(const std::vector<Tensor>& embeds) const;

  // ---- latent networks ----------------------------------------------------

  Gaussian recognition(const Tensor& context_state,
                       const Tensor& response_state) const;
  Gaussian prior(const Tensor& context_state) const;

  // z = mu + sigma * eps with eps ~ N(0, I) drawn from `rng`.
  Latent sample_latent(const Gaussian& g, Rng& rng) const;
  // Same reparameterization with caller-supplied eps (size d_z); eps = 0
  // yields the mean latent used for deterministic evaluation.
  Tensor latent_from_eps(const Gaussian& g,
                         const std::vector<double>& eps) const;

  // ---- decoder ------------------------------------------------------------

  // Summed log-likelihood (a scalar <= 0) of `target` under teacher forcing,
  // starting from BOS with the decoder state affine-initialized from
  // [z; context_state].
  Tensor decode_teacher_logprob(const Tensor& z, const Tensor& context_state,
                                const std::vector<int>& target) const;

  // Argmax rollout (ties resolve to the lowest token id), stopped after EOS
  // or max_len tokens; deterministic in its inputs.
  std::vector<int> decode_greedy(const Tensor& z,
                                 const Tensor& context_state) const;

  // Per-step probability-weighted embeddings E^T softmax(logits_t) under
  // teacher forcing: a differentiable stand-in for the generated response,
  // one vector of size m per target position.
  std::vector<Tensor> soft_response_embeddings(
      const Tensor& z, const Tensor& context_state,
      const std::vector<int>& target) const;

  // ---- losses -------------------------------------------------------------

  // Reconstruction + KL with explicit noise; `group_vector` (size m) is
  // applied inside the context encoding when given.
  ElboParts elbo(const corpus::DialoguePair& pair, const Tensor* group_vector,
                 const std::vector<double>& eps) const;

  // Bag-of-words auxiliary: -sum_t log softmax(W [z; c])[token_t], position
  // independent, over all target tokens.
  Tensor bow_loss(const Tensor& z, const Tensor& context_state,
                  const std::vector<int>& target) const;

  // Group-prediction head: one hidden tanh layer over a response feature
  // (size h) to logits over the n_groups groups.
  Tensor group_logits(const Tensor& response_feature) const;

  // ---- deterministic evaluation helpers ------------------------------------

  // Teacher-forced NLL of the pair with the mean prior latent (eps = 0);
  // pure forward pass. Token count for perplexity is target.size().
  double pair_nll_prior_mean(const corpus::DialoguePair& pair,
                             const Tensor* group_vector = nullptr) const;

 private:
  Tensor embed_row(int token_id) const;
  Tensor run_stack(const std::vector<GruCell>& stack,
                   const std::vector<Tensor>& inputs) const;
  std::vector<Tensor> decoder_states(const Tensor& z,
                                     const Tensor& context_state,
                                     const std::vector<int>& target) const;

  ModelConfig config_;
  Tensor embedding_;  // {V, m}
  std::vector<GruCell> ctx_gru_, resp_gru_, dec_gru_;
  Tensor rec_w_, rec_b_;             // {2 d_z, 2h}, {2 d_z}
  Tensor pri_w_, pri_b_;             // {2 d_z, h}, {2 d_z}
  std::vector<Tensor> init_w_, init_b_;  // per layer: {h, d_z + h}, {h}
  Tensor out_w_, out_b_;             // {V, h}, {V}
  Tensor bow_w_, bow_b_;             // {V, d_z + h}, {V}
  Tensor mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;  // group-prediction head
};

}  // namespace sepa::model

#endif  // SEPA_MODEL_HPP
