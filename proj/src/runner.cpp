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

#include "sepa/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "sepa/checkpoint.hpp"
#include "sepa/error.hpp"
#include "sepa/rng.hpp"

namespace sepa::runner {

namespace {

// RNG stream ids; disjoint from the corpus (11..21) and model (31) streams.
constexpr std::uint64_t kStreamShuffle = 41;
constexpr std::uint64_t kStreamBatchNoise = 42;
constexpr std::uint64_t kStreamKmeans = 43;

// Shortest exact decimal for a double, for byte-stable CSV files.
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

model::ModelConfig model_config_from(const RunConfig& c,
                                     std::size_t vocab_size) {
  model::ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.embed_dim = c.embed_dim;
  mc.hidden = c.hidden;
  mc.latent = c.latent;
  mc.layers = c.layers;
  mc.max_len = c.max_len;
  mc.n_groups = c.n_groups;
  mc.mlp_hidden = c.hidden;  // the prediction head mirrors the GRU width
  return mc;
}

bool grouped_variant(Variant v) {
  return v == Variant::sepacvae || v == Variant::kmeans_cvae_bow;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

Variant variant_from_string(const std::string& name) {
  if (name == "seq2seq") return Variant::seq2seq;
  if (name == "cvae") return Variant::cvae;
  if (name == "cvae_bow") return Variant::cvae_bow;
  if (name == "kmeans_cvae_bow") return Variant::kmeans_cvae_bow;
  if (name == "sepacvae") return Variant::sepacvae;
  throw UsageError("unknown model variant '" + name +
                   "' (expected seq2seq, cvae, cvae_bow, kmeans_cvae_bow, "
                   "or sepacvae)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::seq2seq: return "seq2seq";
    case Variant::cvae: return "cvae";
    case Variant::cvae_bow: return "cvae_bow";
    case Variant::kmeans_cvae_bow: return "kmeans_cvae_bow";
    case Variant::sepacvae: return "sepacvae";
  }
  throw ContractError("unhandled variant value");
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size() || v < 0) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw UsageError("value '" + value + "' for " + key +
                     " is not a nonnegative integer");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("value '" + value + "' for " + key +
                     " is not a number");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw UsageError("value '" + value + "' for " + key +
                   " is not a boolean (true/false/1/0)");
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

void apply_setting(RunConfig& config, const std::string& key,
                   const std::string& value) {
  if (key == "variant") config.variant = variant_from_string(value);
  else if (key == "n_groups") config.n_groups = parse_size(key, value);
  else if (key == "embed_dim") config.embed_dim = parse_size(key, value);
  else if (key == "hidden") config.hidden = parse_size(key, value);
  else if (key == "latent") config.latent = parse_size(key, value);
  else if (key == "layers") config.layers = parse_size(key, value);
  else if (key == "max_len") config.max_len = parse_size(key, value);
  else if (key == "batch_size") config.batch_size = parse_size(key, value);
  else if (key == "learning_rate")
    config.learning_rate = parse_double(key, value);
  else if (key == "epochs") config.epochs = parse_size(key, value);
  else if (key == "warmup_batches")
    config.warmup_batches =
        static_cast<long long>(parse_size(key, value));
  else if (key == "seed")
    config.seed = static_cast<std::uint64_t>(parse_size(key, value));
  else if (key == "max_vocab") config.max_vocab = parse_size(key, value);
  else if (key == "group_scale")
    config.group_scale = parse_double(key, value);
  else if (key == "re_average_positives")
    config.re_average_positives = parse_bool(key, value);
  else if (key == "corpus") config.corpus_path = value;
  else if (key == "labels") config.labels_path = value;
  else if (key == "embeddings") config.embeddings_path = value;
  else if (key == "output_dir") config.output_dir = value;
  else throw UsageError("unknown config key '" + key + "'");
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw UsageError("cannot read config file " + path);
  }
  RunConfig config;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) +
                       " is not key = value: '" + line + "'");
    }
    try {
      apply_setting(config, trim(line.substr(0, eq)),
                    trim(line.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": " +
                       e.what());
    }
  }
  return config;
}

void validate(const RunConfig& config) {
  if (config.embed_dim == 0 || config.hidden == 0 || config.latent == 0 ||
      config.layers == 0 || config.batch_size == 0 || config.epochs == 0) {
    throw UsageError("all size fields must be positive");
  }
  if (config.max_len < 2) {
    throw UsageError("max_len must be at least 2 (one token plus EOS)");
  }
  if (config.learning_rate <= 0.0) {
    throw UsageError("learning_rate must be positive");
  }
  if (config.warmup_batches < 0) {
    throw UsageError("warmup_batches must be nonnegative");
  }
  if (config.corpus_path.empty()) {
    throw UsageError("a corpus path is required");
  }
  if (config.variant == Variant::sepacvae && config.n_groups < 2) {
    throw UsageError("sepacvae requires n_groups >= 2 (the relationship "
                     "term contrasts against other groups)");
  }
  if (grouped_variant(config.variant)) {
    if (config.n_groups == 0 || config.n_groups > config.embed_dim) {
      throw UsageError("n_groups must lie in [1, embed_dim] so orthogonal "
                       "group vectors exist");
    }
  }
}

std::map<std::string, std::string> config_echo(const RunConfig& c) {
  std::map<std::string, std::string> echo;
  echo["variant"] = to_string(c.variant);
  echo["n_groups"] = std::to_string(c.n_groups);
  echo["embed_dim"] = std::to_string(c.embed_dim);
  echo["hidden"] = std::to_string(c.hidden);
  echo["latent"] = std::to_string(c.latent);
  echo["layers"] = std::to_string(c.layers);
  echo["max_len"] = std::to_string(c.max_len);
  echo["batch_size"] = std::to_string(c.batch_size);
  echo["learning_rate"] = fmt(c.learning_rate);
  echo["epochs"] = std::to_string(c.epochs);
  echo["warmup_batches"] = std::to_string(c.warmup_batches);
  echo["seed"] = std::to_string(c.seed);
  echo["max_vocab"] = std::to_string(c.max_vocab);
  echo["group_scale"] = fmt(c.group_scale);
  echo["re_average_positives"] = c.re_average_positives ? "true" : "false";
  echo["corpus"] = c.corpus_path;
  echo["labels"] = c.labels_path;
  echo["embeddings"] = c.embeddings_path;
  echo["output_dir"] = c.output_dir;
  return echo;
}

// ---------------------------------------------------------------------------
// data
// ---------------------------------------------------------------------------

DataSplits split_pairs(const std::vector<corpus::DialoguePair>& pairs) {
  DataSplits splits;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    switch (i % 10) {
      case 8: splits.val.push_back(pairs[i]); break;
      case 9: splits.test.push_back(pairs[i]); break;
      default: splits.train.push_back(pairs[i]); break;
    }
  }
  return splits;
}

Dataset load_dataset(const RunConfig& config) {
  const std::vector<corpus::StringPair> raw =
      corpus::read_pair_file(config.corpus_path);
  if (raw.empty()) {
    throw DataError("corpus " + config.corpus_path + " contains no pairs");
  }
  Dataset ds;
  ds.vocab = corpus::build_vocab(raw, config.max_vocab);
  std::vector<corpus::DialoguePair> encoded;
  encoded.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    encoded.push_back(corpus::encode_pair(ds.vocab, raw[i], config.max_len,
                                          static_cast<int>(i)));
  }
  ds.embeddings =
      config.embeddings_path.empty()
          ? corpus::random_embeddings(ds.vocab, config.embed_dim, config.seed)
          : corpus::load_embeddings(config.embeddings_path, ds.vocab,
                                    config.embed_dim, config.seed);
  ds.splits = split_pairs(encoded);
  return ds;
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params, double lr,
           double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr <= 0.0) throw ContractError("Adam learning rate must be positive");
  for (auto& [name, p] : params) {
    slots_.push_back({p, std::vector<double>(p.size(), 0.0),
                      std::vector<double>(p.size(), 0.0)});
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Slot& slot : slots_) {
    const std::vector<double>& g = slot.param.grad();
    std::vector<double>& x = slot.param.mutable_data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * g[i];
      slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      x[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (Slot& slot : slots_) slot.param.zero_grad();
}

// ---------------------------------------------------------------------------
// k-means baseline conditioning
// ---------------------------------------------------------------------------

std::vector<double> mean_context_embedding(const corpus::DialoguePair& pair,
                                           const corpus::EmbeddingMatrix& emb) {
  if (pair.context.empty()) {
    throw ContractError("pair " + std::to_string(pair.pair_id) +
                        " has an empty context");
  }
  std::vector<double> mean(emb.dim, 0.0);
  for (int id : pair.context) {
    for (std::size_t c = 0; c < emb.dim; ++c) {
      mean[c] += emb.at(static_cast<std::size_t>(id), c);
    }
  }
  for (double& v : mean) v /= static_cast<double>(pair.context.size());
  return mean;
}

std::size_t nearest_centroid(const Tensor& centroids,
                             const std::vector<double>& point) {
  const std::size_t k = centroids.rows();
  const std::size_t dim = centroids.cols();
  if (point.size() != dim) {
    throw ContractError("point dimension does not match the centroids");
  }
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    double d = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double diff = centroids.at(c * dim + j) - point[j];
      d += diff * diff;
    }
    if (d < best_d) {  // strict: ties keep the lowest index
      best_d = d;
      best = c;
    }
  }
  return best;
}

KMeansResult kmeans_contexts(const std::vector<corpus::DialoguePair>& pairs,
                             const corpus::EmbeddingMatrix& emb,
                             std::size_t k, std::uint64_t seed,
                             int iterations) {
  if (k == 0 || pairs.size() < k) {
    throw DataError("k-means needs at least " + std::to_string(k) +
                    " pairs, got " + std::to_string(pairs.size()));
  }
  std::vector<std::vector<double>> points;
  points.reserve(pairs.size());
  for (const auto& p : pairs) points.push_back(mean_context_embedding(p, emb));

  // Seed centroids with k distinct points (partial Fisher-Yates).
  Rng rng = Rng::for_item(seed, kStreamKmeans, 0);
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.uniform_int(
                0, static_cast<int>(order.size() - i) - 1));
    std::swap(order[i], order[j]);
  }
  std::vector<double> centroid_data(k * emb.dim);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(points[order[c]].begin(), points[order[c]].end(),
              centroid_data.begin() + static_cast<std::ptrdiff_t>(c * emb.dim));
  }

  Tensor centroids = Tensor::from({k, emb.dim}, centroid_data);
  std::vector<std::size_t> assignment(points.size(), 0);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      assignment[i] = nearest_centroid(centroids, points[i]);
    }
    std::vector<double> sums(k * emb.dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      ++counts[assignment[i]];
      for (std::size_t j = 0; j < emb.dim; ++j) {
        sums[assignment[i] * emb.dim + j] += points[i][j];
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t j = 0; j < emb.dim; ++j) {
        centroids.mutable_data()[c * emb.dim + j] =
            sums[c * emb.dim + j] / static_cast<double>(counts[c]);
      }
    }
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    assignment[i] = nearest_centroid(centroids, points[i]);
  }
  return {centroids, std::move(assignment)};
}

// ---------------------------------------------------------------------------
// unigram floor
// ---------------------------------------------------------------------------

double unigram_ppl(const std::vector<corpus::DialoguePair>& train,
                   const std::vector<corpus::DialoguePair>& eval,
                   std::size_t vocab_size) {
  if (train.empty() || eval.empty() || vocab_size == 0) {
    throw ContractError("unigram baseline needs training pairs, evaluation "
                        "pairs, and a vocabulary");
  }
  std::vector<std::size_t> counts(vocab_size, 0);
  std::size_t total = 0;
  for (const auto& p : train) {
    for (int id : p.response) {
      ++counts[static_cast<std::size_t>(id)];
      ++total;
    }
  }
  double nll = 0.0;
  std::size_t tokens = 0;
  const double denom = static_cast<double>(total + vocab_size);
  for (const auto& p : eval) {
    for (int id : p.response) {
      const double prob =
          (static_cast<double>(counts[static_cast<std::size_t>(id)]) + 1.0) /
          denom;
      nll -= std::log(prob);
      ++tokens;
    }
  }
  return metrics::perplexity_from_totals(nll, tokens);
}

// ---------------------------------------------------------------------------
// selection protocols
// ---------------------------------------------------------------------------

std::size_t select_group_validation(const model::Model& model,
                                    const corpus::DialoguePair& pair,
                                    const separation::GroupSet& groups) {
  const std::vector<double> eps(model.config().latent, 0.0);
  std::vector<separation::GroupLoss> gl =
      separation::group_losses(model, pair, groups, eps);
  std::vector<double> losses;
  losses.reserve(gl.size());
  for (const auto& g : gl) losses.push_back(g.loss.value());
  return separation::gradient_block_values({losses}).selected[0];
}

TestSelection select_response_test(const model::Model& model,
                                   const std::vector<int>& context,
                                   const separation::GroupSet& groups) {
  // The context is scored bare (no group vector): at test time the group is
  // unknown, so the reference encoding must not presuppose one.
  Tensor bare = model.encode_context(context);
  TestSelection best;
  double best_cos = -std::numeric_limits<double>::infinity();
  const std::vector<double> eps(model.config().latent, 0.0);
  for (std::size_t g = 0; g < groups.n; ++g) {
    Tensor ctx = model.encode_context(context, &groups.vectors[g]);
    model::Gaussian prior = model.prior(ctx);
    Tensor z = model.latent_from_eps(prior, eps);
    std::vector<int> candidate = model.decode_greedy(z, ctx);
    Tensor cand_state = model.encode_response(candidate);
    const double cos = metrics::cosine(bare.data(), cand_state.data());
    if (cos > best_cos) {  // strict: ties keep the lowest group
      best_cos = cos;
      best = {std::move(candidate), g, cos};
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace {

struct VariantLoss {
  Tensor loss;
  separation::TrainRow row;
};

// The non-separated variants share one accumulation: summed reconstruction
// (every variant), plus KL and optionally the bag-of-words term for the
// latent-variable models.
VariantLoss baseline_batch_loss(const model::Model& model,
                                const RunConfig& config,
                                const std::vector<corpus::DialoguePair>& batch,
                                const separation::GroupSet* cluster_vectors,
                                const std::vector<std::size_t>* clusters,
                                long long batch_index, Rng& rng) {
  VariantLoss out;
  Tensor total = Tensor::zeros({});
  const std::size_t dz = model.config().latent;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const corpus::DialoguePair& pair = batch[i];
    const Tensor* gv = nullptr;
    if (cluster_vectors != nullptr) {
      gv = &cluster_vectors->vectors[(*clusters)[i]];
    }
    if (config.variant == Variant::seq2seq) {
      Tensor ctx = model.encode_context(pair.context, gv);
      Tensor z = Tensor::zeros({dz});
      Tensor rec =
          scale(model.decode_teacher_logprob(z, ctx, pair.response), -1.0);
      out.row.loss_rec += rec.value();
      total = add(total, rec);
      continue;
    }
    std::vector<double> eps(dz);
    for (double& e : eps) e = rng.normal();
    model::ElboParts parts = model.elbo(pair, gv, eps);
    Tensor pair_loss = add(parts.reconstruction, parts.kl);
    out.row.loss_rec += parts.reconstruction.value();
    out.row.loss_kl += parts.kl.value();
    if (config.variant == Variant::cvae_bow ||
        config.variant == Variant::kmeans_cvae_bow) {
      Tensor bow =
          model.bow_loss(parts.z, parts.context_state, pair.response);
      out.row.loss_bow += bow.value();
      pair_loss = add(pair_loss, bow);
    }
    total = add(total, pair_loss);
  }
  if (clusters != nullptr) {
    out.row.histogram.assign(cluster_vectors->n, 0);
    for (std::size_t c : *clusters) ++out.row.histogram[c];
  }
  out.loss = total;
  out.row.batch = batch_index;
  out.row.loss_total = total.value();
  return out;
}

void write_report_header(std::ostream& os) {
  os << "batch,alpha,loss_total,loss_rec,loss_kl,loss_re,loss_y,loss_bow,"
        "histogram\n";
}

void write_report_row(std::ostream& os, const separation::TrainRow& row) {
  os << row.batch << ',' << fmt(row.alpha) << ',' << fmt(row.loss_total)
     << ',' << fmt(row.loss_rec) << ',' << fmt(row.loss_kl) << ','
     << fmt(row.loss_re) << ',' << fmt(row.loss_y) << ','
     << fmt(row.loss_bow) << ',';
  if (row.histogram.empty()) {
    os << '-';
  } else {
    for (std::size_t i = 0; i < row.histogram.size(); ++i) {
      if (i) os << ';';
      os << row.histogram[i];
    }
  }
  os << '\n';
}

// Teacher-forced NLL of a whole split under each variant's deterministic
// conditioning (prior-mean latent; groups re-selected per pair).
double split_ppl(const model::Model& model, const RunConfig& config,
                 const std::vector<corpus::DialoguePair>& split,
                 const separation::GroupSet* groups,
                 const Tensor* centroids,
                 const corpus::EmbeddingMatrix& emb) {
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const corpus::DialoguePair& pair : split) {
    const Tensor* gv = nullptr;
    if (config.variant == Variant::sepacvae) {
      gv = &groups->vectors[select_group_validation(model, pair, *groups)];
    } else if (config.variant == Variant::kmeans_cvae_bow) {
      gv = &groups->vectors[nearest_centroid(
          *centroids, mean_context_embedding(pair, emb))];
    }
    if (config.variant == Variant::seq2seq) {
      Tensor ctx = model.encode_context(pair.context, gv);
      Tensor z = Tensor::zeros({model.config().latent});
      nll -= model.decode_teacher_logprob(z, ctx, pair.response).value();
    } else {
      nll += model.pair_nll_prior_mean(pair, gv);
    }
    tokens += pair.response.size();
  }
  return metrics::perplexity_from_totals(nll, tokens);
}

std::string join_pair_ids(const std::vector<corpus::DialoguePair>& batch) {
  std::string out;
  for (const auto& p : batch) {
    if (!out.empty()) out += ',';
    out += std::to_string(p.pair_id);
  }
  return out;
}

}  // namespace

TrainArtifacts train(const RunConfig& config) {
  validate(config);
  Dataset ds = load_dataset(config);
  if (ds.splits.train.empty()) {
    throw DataError("corpus too small: the training split is empty");
  }
  std::filesystem::create_directories(config.output_dir);

  model::Model model(model_config_from(config, ds.vocab.size()),
                     ds.embeddings, config.seed);
  Adam opt(model.named_params(), config.learning_rate);

  separation::GroupSet groups;
  std::optional<KMeansResult> kmeans;
  if (grouped_variant(config.variant)) {
    groups = separation::dialogue_augment(config.embed_dim, config.n_groups,
                                          config.group_scale);
  }
  if (config.variant == Variant::kmeans_cvae_bow) {
    kmeans = kmeans_contexts(ds.splits.train, ds.embeddings, config.n_groups,
                             config.seed);
  }
  separation::AnnealSchedule schedule{config.warmup_batches};

  TrainArtifacts artifacts;
  artifacts.report_path = config.output_dir + "/train_report.csv";
  artifacts.checkpoint_path = config.output_dir + "/checkpoint.bin";
  std::ofstream report(artifacts.report_path, std::ios::trunc);
  if (!report) {
    throw DataError("cannot write training report " + artifacts.report_path);
  }
  write_report_header(report);

  // Checkpoint selection tracks the validation split when one exists;
  // minuscule corpora without one fall back to the training split so the
  // best-checkpoint contract still has a criterion to follow.
  const std::vector<corpus::DialoguePair>& ppl_split =
      ds.splits.val.empty() ? ds.splits.train : ds.splits.val;

  auto save_checkpoint = [&]() {
    std::vector<std::pair<std::string, Tensor>> tensors =
        model.named_params();
    if (kmeans) tensors.emplace_back("kmeans.centroids", kmeans->centroids);
    checkpoint::save(artifacts.checkpoint_path, config_echo(config),
                     ds.vocab.tokens(), tensors);
  };

  double best_ppl = std::numeric_limits<double>::infinity();
  long long t = 0;
  std::vector<std::size_t> order(ds.splits.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng = Rng::for_item(config.seed, kStreamShuffle, epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(
          shuffle_rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end =
          std::min(start + config.batch_size, order.size());
      std::vector<corpus::DialoguePair> batch;
      std::vector<std::size_t> clusters;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(ds.splits.train[order[k]]);
        if (kmeans) clusters.push_back(kmeans->assignment[order[k]]);
      }

      Rng batch_rng = Rng::for_item(config.seed, kStreamBatchNoise,
                                    static_cast<std::uint64_t>(t));
      opt.zero_grad();
      VariantLoss vl;
      if (config.variant == Variant::sepacvae) {
        separation::TotalLoss tl =
            separation::total_loss(model, batch, groups, schedule, t,
                                   batch_rng, config.re_average_positives);
        vl.loss = tl.loss;
        vl.row = tl.row;
      } else {
        vl = baseline_batch_loss(
            model, config, batch, kmeans ? &groups : nullptr,
            kmeans ? &clusters : nullptr, t, batch_rng);
        vl.row.alpha = schedule.alpha(t);  // recorded even when unused
      }
      if (!std::isfinite(vl.row.loss_total)) {
        throw NumericError("non-finite loss at batch " + std::to_string(t) +
                           " (pairs " + join_pair_ids(batch) + ")");
      }
      backward(vl.loss);
      opt.step();
      write_report_row(report, vl.row);
      ++t;
    }

    const double ppl = split_ppl(model, config, ppl_split,
                                 grouped_variant(config.variant) ? &groups
                                                                 : nullptr,
                                 kmeans ? &kmeans->centroids : nullptr,
                                 ds.embeddings);
    if (ppl < best_ppl) {
      best_ppl = ppl;
      save_checkpoint();
    }
  }
  report.flush();
  if (!report) {
    throw DataError("write failure on " + artifacts.report_path);
  }
  artifacts.best_val_ppl = best_ppl;
  artifacts.total_batches = t;
  return artifacts;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

namespace {

struct LoadedModel {
  model::Model model;
  separation::GroupSet groups;
  std::optional<Tensor> centroids;
};

LoadedModel load_checkpoint_model(const RunConfig& config,
                                  const Dataset& ds,
                                  const std::string& checkpoint_path) {
  checkpoint::Snapshot snap = checkpoint::read(checkpoint_path);
  if (snap.vocab != ds.vocab.tokens()) {
    throw DataError("vocabulary mismatch: checkpoint " + checkpoint_path +
                    " was built from a different corpus or vocab limit");
  }
  LoadedModel lm{model::Model(model_config_from(config, ds.vocab.size()),
                              ds.embeddings, config.seed),
                 {},
                 std::nullopt};
  std::vector<std::pair<std::string, Tensor>> tensors =
      lm.model.named_params();
  if (config.variant == Variant::kmeans_cvae_bow) {
    lm.centroids = Tensor::zeros({config.n_groups, config.embed_dim});
    tensors.emplace_back("kmeans.centroids", *lm.centroids);
  }
  checkpoint::restore(snap, tensors);
  if (grouped_variant(config.variant)) {
    lm.groups = separation::dialogue_augment(
        config.embed_dim, config.n_groups, config.group_scale);
  }
  return lm;
}

const std::vector<corpus::DialoguePair>& pick_split(const Dataset& ds,
                                                    const std::string& split) {
  if (split == "val") return ds.splits.val;
  if (split == "test") return ds.splits.test;
  throw UsageError("split must be 'val' or 'test', got '" + split + "'");
}

}  // namespace

metrics::EvalReport evaluate(const RunConfig& config,
                             const std::string& checkpoint_path,
                             const std::string& split,
                             const std::string& generations_path,
                             const std::string& report_path) {
  validate(config);
  Dataset ds = load_dataset(config);
  const std::vector<corpus::DialoguePair>& pairs = pick_split(ds, split);
  if (pairs.empty()) {
    throw DataError("the " + split + " split is empty");
  }
  LoadedModel lm = load_checkpoint_model(config, ds, checkpoint_path);
  const model::Model& model = lm.model;
  const std::vector<double> eps0(config.latent, 0.0);

  std::ofstream gen(generations_path, std::ios::trunc);
  if (!gen) {
    throw DataError("cannot write generations file " + generations_path);
  }

  metrics::EvalReport report;
  std::vector<std::string> generated_texts;
  double bleu1 = 0.0, bleu2 = 0.0, bleu3 = 0.0, length = 0.0;
  double avg_sum = 0.0, coh_sum = 0.0;
  std::size_t avg_n = 0, coh_n = 0;

  for (const corpus::DialoguePair& pair : pairs) {
    std::size_t group = 0;
    std::vector<int> response_ids;
    if (config.variant == Variant::sepacvae) {
      if (split == "val") {
        // Validation knows the true response, so the group is the one whose
        // augmented bound prefers this pair.
        group = select_group_validation(model, pair, lm.groups);
        Tensor ctx = model.encode_context(pair.context,
                                          &lm.groups.vectors[group]);
        Tensor z = model.latent_from_eps(model.prior(ctx), eps0);
        response_ids = model.decode_greedy(z, ctx);
      } else {
        TestSelection sel =
            select_response_test(model, pair.context, lm.groups);
        group = sel.group;
        response_ids = std::move(sel.response);
      }
    } else {
      const Tensor* gv = nullptr;
      if (config.variant == Variant::kmeans_cvae_bow) {
        group = nearest_centroid(*lm.centroids,
                                 mean_context_embedding(pair, ds.embeddings));
        gv = &lm.groups.vectors[group];
      }
      Tensor ctx = model.encode_context(pair.context, gv);
      Tensor z = config.variant == Variant::seq2seq
                     ? Tensor::zeros({config.latent})
                     : model.latent_from_eps(model.prior(ctx), eps0);
      response_ids = model.decode_greedy(z, ctx);
    }

    const std::string context_text = corpus::decode(ds.vocab, pair.context);
    const std::string reference_text =
        corpus::decode(ds.vocab, pair.response);
    const std::string candidate_text =
        corpus::decode(ds.vocab, response_ids);
    gen << context_text << '\t' << candidate_text << '\t' << group << '\n';

    generated_texts.push_back(candidate_text);
    bleu1 += metrics::bleu_n(candidate_text, reference_text, 1);
    bleu2 += metrics::bleu_n(candidate_text, reference_text, 2);
    bleu3 += metrics::bleu_n(candidate_text, reference_text, 3);
    length +=
        static_cast<double>(corpus::tokenize(candidate_text).size());
    if (auto a = metrics::embedding_average(candidate_text, reference_text,
                                            ds.vocab, ds.embeddings)) {
      avg_sum += *a;
      ++avg_n;
    }
    if (auto c = metrics::coherence(context_text, candidate_text, ds.vocab,
                                    ds.embeddings)) {
      coh_sum += *c;
      ++coh_n;
    }
  }
  gen.flush();
  if (!gen) {
    throw DataError("write failure on " + generations_path);
  }

  const double n = static_cast<double>(pairs.size());
  report.ppl = split_ppl(model, config, pairs,
                         grouped_variant(config.variant) ? &lm.groups
                                                         : nullptr,
                         lm.centroids ? &*lm.centroids : nullptr,
                         ds.embeddings);
  report.distinct_1 = metrics::distinct_n(generated_texts, 1);
  report.distinct_2 = metrics::distinct_n(generated_texts, 2);
  report.mean_length = length / n;
  report.bleu_1 = bleu1 / n;
  report.bleu_2 = bleu2 / n;
  report.bleu_3 = bleu3 / n;
  if (avg_n > 0) {
    report.embedding_average = avg_sum / static_cast<double>(avg_n);
  }
  if (coh_n > 0) {
    report.coherence = coh_sum / static_cast<double>(coh_n);
  }
  report.pairs_evaluated = pairs.size();
  report.pairs_skipped_embedding =
      (pairs.size() - avg_n) + (pairs.size() - coh_n);

  std::ofstream rep(report_path, std::ios::trunc);
  if (!rep) {
    throw DataError("cannot write evaluation report " + report_path);
  }
  metrics::write_eval_report_json(rep, report);
  rep.flush();
  if (!rep) {
    throw DataError("write failure on " + report_path);
  }
  return report;
}

// ---------------------------------------------------------------------------
// latent analysis
// ---------------------------------------------------------------------------

LatentAnalysis analyze_latent(const RunConfig& config,
                              const std::string& checkpoint_path,
                              const std::string& latent_csv_path,
                              const std::string& geometry_csv_path) {
  validate(config);
  Dataset ds = load_dataset(config);
  const std::vector<corpus::DialoguePair>& pairs = ds.splits.val;
  if (pairs.size() < 2) {
    throw DataError("latent analysis needs at least two validation pairs");
  }
  LoadedModel lm = load_checkpoint_model(config, ds, checkpoint_path);
  const model::Model& model = lm.model;
  const std::vector<double> eps0(config.latent, 0.0);

  std::ofstream latent(latent_csv_path, std::ios::trunc);
  if (!latent) {
    throw DataError("cannot write latent export " + latent_csv_path);
  }
  latent << "pair_id,group";
  for (std::size_t d = 0; d < config.latent; ++d) latent << ",z_" << d;
  latent << '\n';

  std::vector<std::vector<double>> joints;
  std::vector<std::size_t> groups_out;
  std::size_t sensitive = 0, probes = 0;
  for (const corpus::DialoguePair& pair : pairs) {
    std::size_t group = 0;
    const Tensor* gv = nullptr;
    if (config.variant == Variant::sepacvae) {
      group = select_group_validation(model, pair, lm.groups);
      gv = &lm.groups.vectors[group];
    } else if (config.variant == Variant::kmeans_cvae_bow) {
      group = nearest_centroid(*lm.centroids,
                               mean_context_embedding(pair, ds.embeddings));
      gv = &lm.groups.vectors[group];
    }
    Tensor ctx = model.encode_context(pair.context, gv);
    Tensor resp = model.encode_response(pair.response);
    model::Gaussian q = model.recognition(ctx, resp);
    Tensor z = model.latent_from_eps(q, eps0);  // the recognition mean

    latent << pair.pair_id << ',' << group;
    for (std::size_t d = 0; d < config.latent; ++d) {
      latent << ',' << fmt(z.at(d));
    }
    latent << '\n';

    std::vector<double> joint = ctx.data();
    joint.insert(joint.end(), z.data().begin(), z.data().end());
    joints.push_back(std::move(joint));
    groups_out.push_back(group);

    // Does the latent matter at all? Nudge z and watch the decoded output;
    // recorded as a rate, never asserted.
    if (probes < 32) {
      ++probes;
      std::vector<int> base = model.decode_greedy(z, ctx);
      Tensor shifted = add_const(z, 1.0);
      if (model.decode_greedy(shifted, ctx) != base) ++sensitive;
    }
  }
  latent.flush();
  if (!latent) {
    throw DataError("write failure on " + latent_csv_path);
  }

  std::vector<metrics::GeometryResult> batches;
  for (std::size_t start = 0; start < joints.size();
       start += config.batch_size) {
    const std::size_t end =
        std::min(start + config.batch_size, joints.size());
    if (end - start < 2) break;  // a single leftover pair has no geometry
    std::vector<std::vector<double>> v(joints.begin() + start,
                                       joints.begin() + end);
    if (grouped_variant(config.variant)) {
      std::vector<int> g;
      for (std::size_t i = start; i < end; ++i) {
        g.push_back(static_cast<int>(groups_out[i]));
      }
      batches.push_back(metrics::geometry_batch(v, g));
    } else {
      batches.push_back(metrics::geometry_batch_threshold(v, 0.9));
    }
  }

  LatentAnalysis out;
  out.geometry = metrics::summarize_geometry(std::move(batches));
  out.z_sensitivity =
      probes ? static_cast<double>(sensitive) / static_cast<double>(probes)
             : 0.0;
  out.pairs = pairs.size();

  std::ofstream geo(geometry_csv_path, std::ios::trunc);
  if (!geo) {
    throw DataError("cannot write geometry report " + geometry_csv_path);
  }
  metrics::write_geometry_csv(geo, out.geometry);
  geo.flush();
  if (!geo) {
    throw DataError("write failure on " + geometry_csv_path);
  }
  return out;
}

}  // namespace sepa::runner
