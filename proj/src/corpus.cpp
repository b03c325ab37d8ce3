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

#include "sepa/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "sepa/error.hpp"
#include "sepa/rng.hpp"

namespace sepa::corpus {

Vocab::Vocab() {
  for (const char* t : {kPadToken, kUnkToken, kBosToken, kEosToken}) {
    token_to_id_.emplace(t, static_cast<int>(id_to_token_.size()));
    id_to_token_.emplace_back(t);
  }
}

int Vocab::add(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const int id = static_cast<int>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
  return id;
}

int Vocab::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const {
  return token_to_id_.count(token) != 0;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw ContractError("vocab: id " + std::to_string(id) +
                        " out of range for size " +
                        std::to_string(id_to_token_.size()));
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        out.push_back(std::move(cur));
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<StringPair> extract_single_turn(
    const std::vector<std::string>& utterances) {
  std::vector<StringPair> out;
  if (utterances.size() < 2) return out;
  out.reserve(utterances.size() - 1);
  for (std::size_t i = 0; i + 1 < utterances.size(); ++i) {
    out.emplace_back(utterances[i], utterances[i + 1]);
  }
  return out;
}

namespace {

bool all_tokens_allowed(const std::string& text,
                        const std::unordered_set<std::string>& allowed) {
  for (const auto& tok : tokenize(text)) {
    if (!allowed.count(tok)) return false;
  }
  return true;
}

std::string rewrite_disallowed(const std::string& text,
                               const std::unordered_set<std::string>& allowed,
                               std::size_t& replaced) {
  std::string out;
  for (const auto& tok : tokenize(text)) {
    if (!out.empty()) out.push_back(' ');
    if (allowed.count(tok)) {
      out += tok;
    } else {
      out += kUnkToken;
      ++replaced;
    }
  }
  return out;
}

}  // namespace

FilterResult filter_by_token_list(
    const std::vector<StringPair>& pairs,
    const std::unordered_set<std::string>& allowed_tokens,
    FilterMode mode) {
  if (allowed_tokens.empty()) {
    throw ContractError("filter_by_token_list: allowed token list is empty");
  }
  FilterResult res;
  res.pairs.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (mode == FilterMode::drop) {
      if (all_tokens_allowed(p.first, allowed_tokens) &&
          all_tokens_allowed(p.second, allowed_tokens)) {
        res.pairs.push_back(p);
      } else {
        ++res.dropped;
      }
    } else {
      res.pairs.emplace_back(
          rewrite_disallowed(p.first, allowed_tokens, res.replaced),
          rewrite_disallowed(p.second, allowed_tokens, res.replaced));
    }
  }
  return res;
}

CorpusStats count_one_to_many(const std::vector<StringPair>& pairs) {
  CorpusStats stats;
  stats.pair_count = pairs.size();
  std::unordered_map<std::string, std::unordered_set<std::string>> by_context;
  for (const auto& p : pairs) by_context[p.first].insert(p.second);
  for (const auto& [ctx, responses] : by_context) {
    (void)ctx;
    stats.max_responses_per_context =
        std::max(stats.max_responses_per_context, responses.size());
    if (responses.size() >= 2) ++stats.multi_response_contexts;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// synthetic corpus
// ---------------------------------------------------------------------------

std::vector<double> SyntheticConfig::fixed_branching(int b) {
  if (b < 1) throw ContractError("fixed_branching: b must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(b), 0.0);
  w.back() = 1.0;
  return w;
}

namespace {

// Distinct RNG streams per generator concern; item ids keep every context's
// draws independent of loop structure.
constexpr std::uint64_t kStreamBranch = 11;
constexpr std::uint64_t kStreamFamilies = 12;
constexpr std::uint64_t kStreamContext = 13;
constexpr std::uint64_t kStreamResponse = 14;
constexpr std::uint64_t kStreamSharing = 15;

int draw_weighted(const std::vector<double>& weights, double total, Rng& rng) {
  double u = rng.uniform(0.0, total);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    u -= weights[k];
    if (u < 0.0) return static_cast<int>(k);
  }
  return static_cast<int>(weights.size()) - 1;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config) {
  if (config.vocab_size <= 10) {
    throw ContractError("generate_synthetic_corpus: vocab_size must be > 10");
  }
  if (config.n_contexts <= 0) {
    throw ContractError("generate_synthetic_corpus: n_contexts must be > 0");
  }
  if (config.n_families < 1) {
    throw ContractError("generate_synthetic_corpus: n_families must be >= 1");
  }
  if (config.sharing < 0.0 || config.sharing >= 1.0) {
    throw DataError("generate_synthetic_corpus: sharing must be in [0, 1)");
  }
  if (config.branching_weights.empty()) {
    throw DataError("generate_synthetic_corpus: empty branching distribution");
  }
  double weight_total = 0.0;
  int max_branch = 0;
  for (std::size_t k = 0; k < config.branching_weights.size(); ++k) {
    const double w = config.branching_weights[k];
    if (w < 0.0) {
      throw DataError("generate_synthetic_corpus: negative branching weight");
    }
    weight_total += w;
    if (w > 0.0) max_branch = static_cast<int>(k) + 1;
  }
  if (weight_total <= 0.0) {
    throw DataError("generate_synthetic_corpus: branching weights sum to 0");
  }
  // every context picks its responses from distinct families, so the
  // requested branching must fit into the family count
  if (max_branch > config.n_families) {
    throw DataError(
        "generate_synthetic_corpus: branching up to " +
        std::to_string(max_branch) + " responses needs at least that many "
        "families, have " + std::to_string(config.n_families));
  }

  // Split the token budget: ~40% context words, the rest shared evenly
  // across response families (disjoint pools => labels are ground truth).
  const int n_ctx_words = std::max(4, config.vocab_size * 2 / 5);
  const int per_family =
      (config.vocab_size - n_ctx_words) / config.n_families;
  if (per_family < 2) {
    throw DataError(
        "generate_synthetic_corpus: vocab_size too small for " +
        std::to_string(config.n_families) + " families");
  }
  // contexts are made unique via a two-token combination prefix
  const long long combos =
      static_cast<long long>(n_ctx_words) * n_ctx_words;
  if (combos < config.n_contexts) {
    throw DataError(
        "generate_synthetic_corpus: n_contexts " +
        std::to_string(config.n_contexts) +
        " exceeds the distinct context combinations available (" +
        std::to_string(combos) + ")");
  }

  auto ctx_word = [](int i) { return "ctx" + std::to_string(i); };
  auto fam_word = [per_family](int family, int i) {
    return "f" + std::to_string(family) + "w" +
           std::to_string(i % per_family);
  };

  SyntheticCorpus out;
  out.n_families = config.n_families;
  std::vector<std::vector<std::string>> reuse_pool(
      static_cast<std::size_t>(config.n_families));

  for (int ci = 0; ci < config.n_contexts; ++ci) {
    const auto item = static_cast<std::uint64_t>(ci);

    // context sentence: unique two-token prefix + 2..5 random fillers
    Rng crng = Rng::for_item(config.seed, kStreamContext, item);
    std::string context = ctx_word(ci / n_ctx_words) + " " +
                          ctx_word(ci % n_ctx_words);
    const int fillers = static_cast<int>(crng.uniform_int(2, 5));
    for (int t = 0; t < fillers; ++t) {
      context += " " + ctx_word(static_cast<int>(
                           crng.uniform_int(0, n_ctx_words - 1)));
    }

    Rng brng = Rng::for_item(config.seed, kStreamBranch, item);
    const int k = draw_weighted(config.branching_weights, weight_total, brng) + 1;

    // k distinct families by partial Fisher-Yates over 0..n_families-1
    Rng frng = Rng::for_item(config.seed, kStreamFamilies, item);
    std::vector<int> fam(static_cast<std::size_t>(config.n_families));
    for (int f = 0; f < config.n_families; ++f) fam[static_cast<std::size_t>(f)] = f;
    for (int j = 0; j < k; ++j) {
      const int swap_with = static_cast<int>(
          frng.uniform_int(j, config.n_families - 1));
      std::swap(fam[static_cast<std::size_t>(j)],
                fam[static_cast<std::size_t>(swap_with)]);
    }

    for (int j = 0; j < k; ++j) {
      const int family = fam[static_cast<std::size_t>(j)];
      const auto slot =
          item * static_cast<std::uint64_t>(config.n_families) +
          static_cast<std::uint64_t>(family);
      auto& pool = reuse_pool[static_cast<std::size_t>(family)];

      Rng srng = Rng::for_item(config.seed, kStreamSharing, slot);
      std::string response;
      if (!pool.empty() && srng.uniform() < config.sharing) {
        response = pool[static_cast<std::size_t>(
            srng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
      } else {
        // fresh response: family marker word + 3..6 family-pool tokens
        Rng rrng = Rng::for_item(config.seed, kStreamResponse, slot);
        response = fam_word(family, 0);
        const int len = static_cast<int>(rrng.uniform_int(3, 6));
        for (int t = 0; t < len; ++t) {
          response += " " + fam_word(family, static_cast<int>(rrng.uniform_int(
                                                 0, per_family - 1)));
        }
        pool.push_back(response);
      }
      out.pairs.emplace_back(context, response);
      out.labels.push_back(family);
    }
  }

  out.stats = count_one_to_many(out.pairs);
  return out;
}

// ---------------------------------------------------------------------------
// vocabulary and encoding
// ---------------------------------------------------------------------------

Vocab build_vocab(const std::vector<StringPair>& pairs, std::size_t max_size) {
  if (max_size < 5) {
    throw ContractError("build_vocab: max_size must leave room for tokens "
                        "beyond the four reserved slots");
  }
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& p : pairs) {
    for (const auto& t : tokenize(p.first)) ++counts[t];
    for (const auto& t : tokenize(p.second)) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab vocab;
  for (const auto& [token, count] : ranked) {
    (void)count;
    if (vocab.size() >= max_size) break;
    vocab.add(token);
  }
  return vocab;
}

std::vector<int> encode(const Vocab& vocab,
                        const std::vector<std::string>& tokens,
                        std::size_t max_len) {
  if (max_len < 2) {
    throw ContractError("encode: max_len must be >= 2 to fit a token + EOS");
  }
  std::vector<int> ids;
  ids.reserve(std::min(tokens.size() + 1, max_len));
  for (const auto& t : tokens) {
    if (ids.size() + 1 >= max_len) break;  // leave room for EOS
    ids.push_back(vocab.id_of(t));
  }
  ids.push_back(kEos);
  return ids;
}

DialoguePair encode_pair(const Vocab& vocab, const StringPair& pair,
                         std::size_t max_len, int pair_id) {
  DialoguePair dp;
  dp.context = encode(vocab, tokenize(pair.first), max_len);
  dp.response = encode(vocab, tokenize(pair.second), max_len);
  dp.pair_id = pair_id;
  return dp;
}

std::string decode(const Vocab& vocab, const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token_of(id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// embeddings
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kStreamEmbedInit = 21;

void fill_random_row(EmbeddingMatrix& emb, std::size_t row,
                     std::uint64_t seed) {
  Rng rng = Rng::for_item(seed, kStreamEmbedInit, row);
  for (std::size_t c = 0; c < emb.dim; ++c) {
    emb.data[row * emb.dim + c] = rng.uniform(-0.1, 0.1);
  }
}

}  // namespace

EmbeddingMatrix random_embeddings(const Vocab& vocab, std::size_t dim,
                                  std::uint64_t seed) {
  if (dim == 0) throw ContractError("random_embeddings: dim must be > 0");
  EmbeddingMatrix emb;
  emb.vocab_size = vocab.size();
  emb.dim = dim;
  emb.data.assign(emb.vocab_size * dim, 0.0);
  for (std::size_t r = 0; r < emb.vocab_size; ++r) {
    if (static_cast<int>(r) == kPad) continue;  // PAD stays zero
    fill_random_row(emb, r, seed);
  }
  return emb;
}

EmbeddingMatrix load_embeddings(const std::string& path, const Vocab& vocab,
                                std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ContractError("load_embeddings: dim must be > 0");
  std::ifstream in(path);
  if (!in) throw DataError("load_embeddings: cannot open " + path);

  EmbeddingMatrix emb = random_embeddings(vocab, dim, seed);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) {
      throw DataError("load_embeddings: " + path + ":" +
                      std::to_string(line_no) + ": blank token field");
    }
    std::vector<double> values;
    double v;
    while (ls >> v) values.push_back(v);
    if (!ls.eof()) {
      throw DataError("load_embeddings: " + path + ":" +
                      std::to_string(line_no) + ": non-numeric value");
    }
    if (values.size() != dim) {
      throw DataError("load_embeddings: " + path + ":" +
                      std::to_string(line_no) + ": expected " +
                      std::to_string(dim) + " values, found " +
                      std::to_string(values.size()));
    }
    if (!vocab.contains(token)) continue;  // not in vocabulary: ignore
    const auto row = static_cast<std::size_t>(vocab.id_of(token));
    if (row == static_cast<std::size_t>(kPad)) continue;  // PAD stays zero
    std::copy(values.begin(), values.end(), emb.data.begin() + row * dim);
  }
  return emb;
}

// ---------------------------------------------------------------------------
// file I/O
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> parts;
  std::string::size_type start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      parts.push_back(line.substr(start));
      return parts;
    }
    parts.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

}  // namespace

std::vector<std::vector<std::string>> read_dialogue_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_dialogue_file: cannot open " + path);
  std::vector<std::vector<std::string>> dialogues;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    dialogues.push_back(split_tabs(line));
  }
  return dialogues;
}

std::vector<StringPair> read_pair_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_pair_file: cannot open " + path);
  std::vector<StringPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto parts = split_tabs(line);
    if (parts.size() != 2) {
      throw DataError("read_pair_file: " + path + ":" +
                      std::to_string(line_no) + ": expected exactly one TAB, "
                      "found " + std::to_string(parts.size() - 1));
    }
    pairs.emplace_back(parts[0], parts[1]);
  }
  return pairs;
}

void write_pair_file(const std::string& path,
                     const std::vector<StringPair>& pairs) {
  std::ofstream out(path);
  if (!out) throw DataError("write_pair_file: cannot open " + path);
  for (const auto& p : pairs) {
    out << p.first << '\t' << p.second << '\n';
  }
  if (!out) throw DataError("write_pair_file: write failed on " + path);
}

std::vector<int> read_label_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_label_file: cannot open " + path);
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      std::size_t consumed = 0;
      const int v = std::stoi(line, &consumed);
      if (consumed != line.size()) throw std::invalid_argument(line);
      labels.push_back(v);
    } catch (const std::exception&) {
      throw DataError("read_label_file: " + path + ":" +
                      std::to_string(line_no) + ": not an integer: " + line);
    }
  }
  return labels;
}

void write_label_file(const std::string& path,
                      const std::vector<int>& labels) {
  std::ofstream out(path);
  if (!out) throw DataError("write_label_file: cannot open " + path);
  for (int v : labels) out << v << '\n';
  if (!out) throw DataError("write_label_file: write failed on " + path);
}

}  // namespace sepa::corpus
