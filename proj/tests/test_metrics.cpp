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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "sepa/corpus.hpp"
#include "sepa/error.hpp"
#include "sepa/metrics.hpp"
#include "sepa/rng.hpp"

using namespace sepa;

TEST_CASE("distinct_n: hand counts and degenerate inputs") {
  CHECK(metrics::distinct_n({"a a b"}, 1) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(metrics::distinct_n({"the cat sat"}, 2) == 1.0);
  // duplicating the corpus halves distinct-2: same unique set, double total
  CHECK(metrics::distinct_n({"the cat sat", "the cat sat"}, 2) == 0.5);
  CHECK(metrics::distinct_n({"cat"}, 2) == 0.0);  // no bigrams
  CHECK(metrics::distinct_n({}, 1) == 0.0);
  CHECK(metrics::distinct_n({"the cat sat", "the the the"}, 1) ==
        doctest::Approx(3.0 / 6.0).epsilon(1e-15));
  CHECK(metrics::distinct_n({"the cat sat", "the the the"}, 2) ==
        doctest::Approx(3.0 / 4.0).epsilon(1e-15));
  CHECK_THROWS_AS(metrics::distinct_n({"a"}, 0), ContractError);
}

TEST_CASE("bleu_n: identity, hand precision, smoothing, brevity") {
  CHECK(metrics::bleu_n("the cat sat", "the cat sat", 2) == 1.0);
  CHECK(metrics::bleu_n("a b c", "a b d", 1) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  // disjoint vocab: smoothed floor 1/(3+1)
  CHECK(metrics::bleu_n("x y z", "p q r", 1) ==
        doctest::Approx(0.25).epsilon(1e-15));
  // frozen: sqrt(1/2 * 2/5)
  CHECK(metrics::bleu_n("the cat sat on the mat", "the cat sat", 2) ==
        doctest::Approx(0.4472135954999579).epsilon(1e-12));
  // frozen: short candidate, perfect unigram, smoothed bigram, BP = e^-2
  CHECK(metrics::bleu_n("cat", "the cat sat", 2) ==
        doctest::Approx(0.1353352832366127).epsilon(1e-12));
  // empty candidate: brevity penalty hard-zeroes
  CHECK(metrics::bleu_n("", "the cat", 1) == 0.0);
  CHECK_THROWS_AS(metrics::bleu_n("a", "a", 0), ContractError);
}

TEST_CASE("golden corpus: frozen hand-counted metric values") {
  const std::string path = std::string(SEPA_DATA_DIR) + "/golden_metrics.tsv";
  const auto pairs = corpus::read_pair_file(path);
  REQUIRE(pairs.size() == 10);

  std::vector<std::string> cands;
  for (const auto& p : pairs) cands.push_back(p.first);

  CHECK(std::fabs(metrics::distinct_n(cands, 1) - 0.78125) < 1e-9);
  CHECK(std::fabs(metrics::distinct_n(cands, 2) - 0.95454545454545459) <
        1e-9);

  auto mean_bleu = [&pairs](int n) {
    double s = 0.0;
    for (const auto& p : pairs) s += metrics::bleu_n(p.first, p.second, n);
    return s / static_cast<double>(pairs.size());
  };
  CHECK(std::fabs(mean_bleu(1) - 0.60141360663080179) < 1e-9);
  CHECK(std::fabs(mean_bleu(2) - 0.57623783937189088) < 1e-9);
  CHECK(std::fabs(mean_bleu(3) - 0.58472179076930653) < 1e-9);
}

namespace {

// Two-word vocabulary with hand-picked orthogonal embedding rows.
struct RiggedEmbeddings {
  corpus::Vocab vocab;
  corpus::EmbeddingMatrix emb;
  RiggedEmbeddings() {
    vocab.add("north");  // id 4 -> (1, 0)
    vocab.add("east");   // id 5 -> (0, 1)
    vocab.add("mix");    // id 6 -> (1, 1)
    emb.vocab_size = vocab.size();
    emb.dim = 2;
    emb.data.assign(emb.vocab_size * 2, 0.0);
    emb.data[4 * 2 + 0] = 1.0;
    emb.data[5 * 2 + 1] = 1.0;
    emb.data[6 * 2 + 0] = 1.0;
    emb.data[6 * 2 + 1] = 1.0;
  }
};

}  // namespace

TEST_CASE("embedding_average and coherence: rigged geometry") {
  RiggedEmbeddings rig;
  // identical sentences
  CHECK(*metrics::embedding_average("north east", "north east", rig.vocab,
                                    rig.emb) == doctest::Approx(1.0));
  // orthogonal single tokens
  CHECK(*metrics::embedding_average("north", "east", rig.vocab, rig.emb) ==
        doctest::Approx(0.0));
  // mean of (1,0) and (0,1) against (1,1): cosine 1
  CHECK(*metrics::embedding_average("north east", "mix", rig.vocab, rig.emb) ==
        doctest::Approx(1.0).epsilon(1e-12));
  // 45 degrees
  CHECK(*metrics::embedding_average("north", "mix", rig.vocab, rig.emb) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

  // out-of-vocabulary-only side: absent
  CHECK_FALSE(metrics::embedding_average("zzz", "north", rig.vocab, rig.emb)
                  .has_value());
  // UNK literal is excluded, not embedded
  CHECK_FALSE(metrics::embedding_average("<unk>", "north", rig.vocab, rig.emb)
                  .has_value());
  // mixed: OOV tokens are skipped, eligible ones still count
  CHECK(*metrics::embedding_average("zzz north", "north", rig.vocab,
                                    rig.emb) == doctest::Approx(1.0));

  // coherence is the same construction and symmetric
  const auto ab = metrics::coherence("north mix", "east", rig.vocab, rig.emb);
  const auto ba = metrics::coherence("east", "north mix", rig.vocab, rig.emb);
  CHECK(*ab == *ba);
}

TEST_CASE("cosine: range, zero-norm convention, dimension contract") {
  CHECK(metrics::cosine({1.0, 0.0}, {0.0, 1.0}) == 0.0);
  CHECK(metrics::cosine({1.0, 0.0}, {-1.0, 0.0}) == -1.0);
  CHECK(metrics::cosine({0.0, 0.0}, {1.0, 0.0}) == 0.0);  // zero norm
  CHECK_THROWS_AS(metrics::cosine({1.0}, {1.0, 2.0}), ContractError);
}

TEST_CASE("geometry: frozen three-vector example") {
  const std::vector<std::vector<double>> vecs{
      {1.0, 0.0}, {0.6, 0.8}, {0.0, 1.0}};
  const auto res = metrics::geometry_batch(vecs, {0, 0, 1});
  REQUIRE(res.inner_dis.has_value());
  REQUIRE(res.inter_dis.has_value());
  // cos(v0,v1)=0.6, cos(v0,v2)=0, cos(v1,v2)=0.8
  // inner: (0.6 + 0.6)/2; inter: (0 + 0.8 + 0.4)/3
  CHECK(*res.inner_dis == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(*res.inter_dis == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("geometry: degenerate batches and contracts") {
  const std::vector<std::vector<double>> two{{1.0, 0.0}, {1.0, 0.0}};
  const auto same_group = metrics::geometry_batch(two, {0, 0});
  CHECK(*same_group.inner_dis == 1.0);
  CHECK_FALSE(same_group.inter_dis.has_value());  // single group

  const std::vector<std::vector<double>> ortho{{1.0, 0.0}, {0.0, 1.0}};
  const auto diff_group = metrics::geometry_batch(ortho, {0, 1});
  CHECK_FALSE(diff_group.inner_dis.has_value());  // both groups singleton
  CHECK(*diff_group.inter_dis == 0.0);

  CHECK_THROWS_AS(metrics::geometry_batch({{1.0}}, {0}), ContractError);
  CHECK_THROWS_AS(metrics::geometry_batch(two, {0}), ContractError);
  CHECK_THROWS_AS(
      metrics::geometry_batch({{1.0, 0.0}, {1.0}}, {0, 1}), ContractError);
}

TEST_CASE("geometry threshold mode: pairwise predicate, not a partition") {
  const std::vector<std::vector<double>> vecs{
      {1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  const auto res = metrics::geometry_batch_threshold(vecs, 0.9);
  CHECK(*res.inner_dis == 1.0);
  CHECK(*res.inter_dis == 0.0);

  // chain case: cos(a,b) and cos(b,c) pass the threshold but cos(a,c)
  // fails, so a and c compare as different groups; a partition could not
  // represent this
  const double z = std::sqrt(0.5);
  const std::vector<std::vector<double>> chain{
      {1.0, 0.0}, {z, z}, {0.0, 1.0}};
  const auto ch = metrics::geometry_batch_threshold(chain, 0.5);
  REQUIRE(ch.inner_dis.has_value());
  REQUIRE(ch.inter_dis.has_value());
  // inner: a-b (z), b-(a,c) (z, z), c-b (z) -> all z; inter: a-c (0), c-a (0)
  CHECK(*ch.inner_dis == doctest::Approx(z).epsilon(1e-15));
  CHECK(*ch.inter_dis == doctest::Approx(0.0).epsilon(1e-15));
}

namespace {

// Independent O(n^2) brute force: precompute the full cosine matrix, then
// take row means. Mirrors the contract, not the implementation.
metrics::GeometryResult brute_force_geometry(
    const std::vector<std::vector<double>>& vecs,
    const std::vector<int>& groups) {
  const std::size_t n = vecs.size();
  std::vector<std::vector<double>> cos_mat(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) cos_mat[i][j] = metrics::cosine(vecs[i], vecs[j]);
    }
  }
  double in_total = 0.0, out_total = 0.0;
  std::size_t in_rows = 0, out_rows = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double in = 0.0, out = 0.0;
    std::size_t nin = 0, nout = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (groups[i] == groups[j]) {
        in += cos_mat[i][j];
        ++nin;
      } else {
        out += cos_mat[i][j];
        ++nout;
      }
    }
    if (nin) {
      in_total += in / static_cast<double>(nin);
      ++in_rows;
    }
    if (nout) {
      out_total += out / static_cast<double>(nout);
      ++out_rows;
    }
  }
  metrics::GeometryResult r;
  if (in_rows) r.inner_dis = in_total / static_cast<double>(in_rows);
  if (out_rows) r.inter_dis = out_total / static_cast<double>(out_rows);
  return r;
}

}  // namespace

TEST_CASE("geometry equals the brute-force pairwise oracle exactly") {
  Rng rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_int(0, 62));
    const std::size_t d = 1 + static_cast<std::size_t>(rng.uniform_int(0, 7));
    std::vector<std::vector<double>> vecs(n, std::vector<double>(d));
    std::vector<int> groups(n);
    for (auto& v : vecs) {
      for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    }
    for (auto& g : groups) g = static_cast<int>(rng.uniform_int(0, 3));
    const auto got = metrics::geometry_batch(vecs, groups);
    const auto want = brute_force_geometry(vecs, groups);
    CHECK(got.inner_dis.has_value() == want.inner_dis.has_value());
    CHECK(got.inter_dis.has_value() == want.inter_dis.has_value());
    if (got.inner_dis) CHECK(*got.inner_dis == *want.inner_dis);
    if (got.inter_dis) CHECK(*got.inter_dis == *want.inter_dis);
  }
}

TEST_CASE("geometry summary and CSV") {
  metrics::GeometryResult full{0.8, 0.2};
  metrics::GeometryResult inner_only{0.6, std::nullopt};
  auto rep = metrics::summarize_geometry({full, inner_only});
  REQUIRE(rep.mean_inner.has_value());
  CHECK(*rep.mean_inner == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(*rep.mean_inter == doctest::Approx(0.2).epsilon(1e-15));

  std::ostringstream os;
  metrics::write_geometry_csv(os, rep);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "batch,inner_dis,inter_dis");
  std::getline(is, line);
  CHECK(line.substr(0, 2) == "0,");
  std::getline(is, line);
  CHECK(line.find("nan") != std::string::npos);
}

TEST_CASE("perplexity_from_totals: formula, floor, contracts") {
  // uniform model over V tokens: nll = T log V -> ppl = V
  const double v = 12.0;
  CHECK(metrics::perplexity_from_totals(7.0 * std::log(v), 7) ==
        doctest::Approx(v).epsilon(1e-12));
  CHECK(metrics::perplexity_from_totals(0.0, 10) == 1.0);
  CHECK_THROWS_AS(metrics::perplexity_from_totals(1.0, 0), ContractError);
  CHECK_THROWS_AS(metrics::perplexity_from_totals(-1.0, 5), NumericError);
}

TEST_CASE("EvalReport JSON round trip, including absent optionals") {
  metrics::EvalReport r;
  r.ppl = 23.5;
  r.distinct_1 = 0.5;
  r.distinct_2 = 0.75;
  r.mean_length = 4.2;
  r.bleu_1 = 0.6;
  r.bleu_2 = 0.5;
  r.bleu_3 = 0.4;
  r.embedding_average = 0.91;
  r.coherence = std::nullopt;
  r.pairs_evaluated = 100;
  r.pairs_skipped_embedding = 3;

  std::stringstream ss;
  metrics::write_eval_report_json(ss, r);
  const auto back = metrics::read_eval_report_json(ss);
  CHECK(back.ppl == r.ppl);
  CHECK(back.distinct_2 == r.distinct_2);
  CHECK(back.bleu_3 == r.bleu_3);
  CHECK(*back.embedding_average == *r.embedding_average);
  CHECK_FALSE(back.coherence.has_value());
  CHECK(back.pairs_evaluated == 100);
  CHECK(back.pairs_skipped_embedding == 3);

  std::stringstream bad("{\"ppl\": 1.0}");
  CHECK_THROWS_AS(metrics::read_eval_report_json(bad), DataError);
  std::stringstream junk("not json");
  CHECK_THROWS_AS(metrics::read_eval_report_json(junk), DataError);
}

TEST_CASE("fuzz: all metric outputs honor their documented ranges") {
  Rng rng(1000);
  const std::vector<std::string> alphabet{"a", "b", "c", "d", "e",
                                          "f", "g", "h"};
  auto random_sentence = [&]() {
    const int len = static_cast<int>(rng.uniform_int(0, 6));
    std::string s;
    for (int i = 0; i < len; ++i) {
      if (!s.empty()) s.push_back(' ');
      s += alphabet[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(alphabet.size()) - 1))];
    }
    return s;
  };

  corpus::Vocab vocab;
  for (const auto& t : alphabet) vocab.add(t);
  const auto emb = corpus::random_embeddings(vocab, 4, 9);

  for (int i = 0; i < 1000; ++i) {
    const auto c = random_sentence();
    const auto r = random_sentence();
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 2));

    const double d = metrics::distinct_n({c, r}, n);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);

    const double b = metrics::bleu_n(c, r, n);
    CHECK(b >= 0.0);
    CHECK(b <= 1.0);

    const auto avg = metrics::embedding_average(c, r, vocab, emb);
    if (avg) {
      CHECK(*avg >= -1.0);
      CHECK(*avg <= 1.0);
    }
  }
}
