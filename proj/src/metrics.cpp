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

#include "sepa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "sepa/error.hpp"

namespace sepa::metrics {

namespace {

// n-grams as joined strings with an unprintable separator that whitespace
// tokenization can never produce.
std::vector<std::string> ngrams(const std::vector<std::string>& tokens,
                                int n) {
  std::vector<std::string> out;
  if (n <= 0 || tokens.size() < static_cast<std::size_t>(n)) return out;
  out.reserve(tokens.size() - static_cast<std::size_t>(n) + 1);
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size();
       ++i) {
    std::string g = tokens[i];
    for (int j = 1; j < n; ++j) {
      g.push_back('\x1f');
      g += tokens[i + static_cast<std::size_t>(j)];
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace

double distinct_n(const std::vector<std::string>& responses, int n) {
  if (n < 1) throw ContractError("distinct_n: n must be >= 1");
  std::unordered_set<std::string> unique;
  std::size_t total = 0;
  for (const auto& r : responses) {
    for (auto& g : ngrams(corpus::tokenize(r), n)) {
      ++total;
      unique.insert(std::move(g));
    }
  }
  if (total == 0) return 0.0;
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

double bleu_n(const std::string& candidate, const std::string& reference,
              int n) {
  if (n < 1) throw ContractError("bleu_n: n must be >= 1");
  const auto cand = corpus::tokenize(candidate);
  const auto ref = corpus::tokenize(reference);

  double log_prec_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    const auto cand_grams = ngrams(cand, k);
    const auto ref_grams = ngrams(ref, k);
    std::unordered_map<std::string, std::size_t> ref_counts;
    for (const auto& g : ref_grams) ++ref_counts[g];

    std::unordered_map<std::string, std::size_t> cand_counts;
    for (const auto& g : cand_grams) ++cand_counts[g];
    std::size_t clipped = 0;
    for (const auto& [g, c] : cand_counts) {
      const auto it = ref_counts.find(g);
      if (it != ref_counts.end()) clipped += std::min(c, it->second);
    }
    const std::size_t total = cand_grams.size();
    double precision;
    if (clipped == 0) {
      precision = 1.0 / static_cast<double>(total + 1);  // +1/+1 smoothing
    } else {
      precision =
          static_cast<double>(clipped) / static_cast<double>(total);
    }
    log_prec_sum += std::log(precision);
  }

  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  double brevity = 1.0;
  if (c < r) {
    brevity = c == 0.0 ? 0.0 : std::exp(1.0 - r / c);
  }
  return brevity * std::exp(log_prec_sum / n);
}

namespace {

// Mean embedding of the sentence's eligible tokens: in-vocabulary and not
// PAD/UNK. Absent when nothing qualifies.
std::optional<std::vector<double>> mean_embedding(
    const std::string& text, const corpus::Vocab& vocab,
    const corpus::EmbeddingMatrix& emb) {
  std::vector<double> acc(emb.dim, 0.0);
  std::size_t count = 0;
  for (const auto& tok : corpus::tokenize(text)) {
    const int id = vocab.id_of(tok);
    if (id == corpus::kPad || id == corpus::kUnk) continue;
    for (std::size_t c = 0; c < emb.dim; ++c) {
      acc[c] += emb.at(static_cast<std::size_t>(id), c);
    }
    ++count;
  }
  if (count == 0) return std::nullopt;
  for (double& v : acc) v /= static_cast<double>(count);
  return acc;
}

}  // namespace

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw ContractError("cosine: dimension mismatch " +
                        std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double v = dot / (std::sqrt(na) * std::sqrt(nb));
  // rounding can push |v| a hair past 1; clamp to the documented range
  return std::max(-1.0, std::min(1.0, v));
}

std::optional<double> embedding_average(const std::string& candidate,
                                        const std::string& reference,
                                        const corpus::Vocab& vocab,
                                        const corpus::EmbeddingMatrix& emb) {
  const auto mc = mean_embedding(candidate, vocab, emb);
  const auto mr = mean_embedding(reference, vocab, emb);
  if (!mc || !mr) return std::nullopt;
  return cosine(*mc, *mr);
}

std::optional<double> coherence(const std::string& context,
                                const std::string& response,
                                const corpus::Vocab& vocab,
                                const corpus::EmbeddingMatrix& emb) {
  return embedding_average(context, response, vocab, emb);
}

// ---------------------------------------------------------------------------
// latent geometry
// ---------------------------------------------------------------------------

namespace {

// Shared core: `same(i, j)` decides group membership per ordered pair.
template <class SamePredicate>
GeometryResult geometry_core(const std::vector<std::vector<double>>& vectors,
                             SamePredicate same) {
  const std::size_t n = vectors.size();
  if (n < 2) {
    throw ContractError("geometry: at least 2 examples required, got " +
                        std::to_string(n));
  }
  for (const auto& v : vectors) {
    if (v.size() != vectors[0].size()) {
      throw ContractError("geometry: inconsistent vector dimensions");
    }
  }

  double inner_sum = 0.0, inter_sum = 0.0;
  std::size_t inner_examples = 0, inter_examples = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double in_acc = 0.0, out_acc = 0.0;
    std::size_t in_cnt = 0, out_cnt = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double c = cosine(vectors[i], vectors[j]);
      if (same(i, j, c)) {
        in_acc += c;
        ++in_cnt;
      } else {
        out_acc += c;
        ++out_cnt;
      }
    }
    if (in_cnt > 0) {
      inner_sum += in_acc / static_cast<double>(in_cnt);
      ++inner_examples;
    }
    if (out_cnt > 0) {
      inter_sum += out_acc / static_cast<double>(out_cnt);
      ++inter_examples;
    }
  }

  GeometryResult res;
  if (inner_examples > 0) {
    res.inner_dis = inner_sum / static_cast<double>(inner_examples);
  }
  if (inter_examples > 0) {
    res.inter_dis = inter_sum / static_cast<double>(inter_examples);
  }
  return res;
}

}  // namespace

GeometryResult geometry_batch(const std::vector<std::vector<double>>& vectors,
                              const std::vector<int>& groups) {
  if (groups.size() != vectors.size()) {
    throw ContractError("geometry_batch: " + std::to_string(vectors.size()) +
                        " vectors but " + std::to_string(groups.size()) +
                        " group labels");
  }
  return geometry_core(vectors, [&groups](std::size_t i, std::size_t j,
                                          double) {
    return groups[i] == groups[j];
  });
}

GeometryResult geometry_batch_threshold(
    const std::vector<std::vector<double>>& vectors, double threshold) {
  return geometry_core(vectors, [threshold](std::size_t, std::size_t,
                                            double cos_ij) {
    return cos_ij >= threshold;
  });
}

GeometryReport summarize_geometry(std::vector<GeometryResult> batches) {
  GeometryReport rep;
  rep.batches = std::move(batches);
  double in_sum = 0.0, out_sum = 0.0;
  std::size_t in_cnt = 0, out_cnt = 0;
  for (const auto& b : rep.batches) {
    if (b.inner_dis) {
      in_sum += *b.inner_dis;
      ++in_cnt;
    }
    if (b.inter_dis) {
      out_sum += *b.inter_dis;
      ++out_cnt;
    }
  }
  if (in_cnt > 0) rep.mean_inner = in_sum / static_cast<double>(in_cnt);
  if (out_cnt > 0) rep.mean_inter = out_sum / static_cast<double>(out_cnt);
  return rep;
}

void write_geometry_csv(std::ostream& os, const GeometryReport& report) {
  os << "batch,inner_dis,inter_dis\n";
  char buf[128];
  for (std::size_t i = 0; i < report.batches.size(); ++i) {
    const auto& b = report.batches[i];
    os << i << ',';
    if (b.inner_dis) {
      std::snprintf(buf, sizeof(buf), "%.17g", *b.inner_dis);
      os << buf;
    } else {
      os << "nan";
    }
    os << ',';
    if (b.inter_dis) {
      std::snprintf(buf, sizeof(buf), "%.17g", *b.inter_dis);
      os << buf;
    } else {
      os << "nan";
    }
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// perplexity and the evaluation report
// ---------------------------------------------------------------------------

double perplexity_from_totals(double total_nll, std::size_t total_tokens) {
  if (total_tokens == 0) {
    throw ContractError("perplexity_from_totals: no target tokens");
  }
  if (!(total_nll >= 0.0)) {
    throw NumericError("perplexity_from_totals: negative or non-finite NLL " +
                       std::to_string(total_nll));
  }
  return std::exp(total_nll / static_cast<double>(total_tokens));
}

void write_eval_report_json(std::ostream& os, const EvalReport& r) {
  nlohmann::json j;
  j["ppl"] = r.ppl;
  j["distinct_1"] = r.distinct_1;
  j["distinct_2"] = r.distinct_2;
  j["mean_length"] = r.mean_length;
  j["bleu_1"] = r.bleu_1;
  j["bleu_2"] = r.bleu_2;
  j["bleu_3"] = r.bleu_3;
  j["embedding_average"] =
      r.embedding_average ? nlohmann::json(*r.embedding_average)
                          : nlohmann::json(nullptr);
  j["coherence"] =
      r.coherence ? nlohmann::json(*r.coherence) : nlohmann::json(nullptr);
  j["pairs_evaluated"] = r.pairs_evaluated;
  j["pairs_skipped_embedding"] = r.pairs_skipped_embedding;
  os << j.dump(2) << '\n';
}

EvalReport read_eval_report_json(std::istream& is) {
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("read_eval_report_json: ") + e.what());
  }
  EvalReport r;
  try {
    r.ppl = j.at("ppl").get<double>();
    r.distinct_1 = j.at("distinct_1").get<double>();
    r.distinct_2 = j.at("distinct_2").get<double>();
    r.mean_length = j.at("mean_length").get<double>();
    r.bleu_1 = j.at("bleu_1").get<double>();
    r.bleu_2 = j.at("bleu_2").get<double>();
    r.bleu_3 = j.at("bleu_3").get<double>();
    if (!j.at("embedding_average").is_null()) {
      r.embedding_average = j.at("embedding_average").get<double>();
    }
    if (!j.at("coherence").is_null()) {
      r.coherence = j.at("coherence").get<double>();
    }
    r.pairs_evaluated = j.at("pairs_evaluated").get<std::size_t>();
    r.pairs_skipped_embedding =
        j.at("pairs_skipped_embedding").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("read_eval_report_json: missing field: ") +
                    e.what());
  }
  return r;
}

}  // namespace sepa::metrics
