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
//
// Command-line front end: data preparation, synthetic corpus generation,
// training, evaluation, single-context generation, closed-form verification,
// and latent-space analysis. Every failure maps onto the shared exit-code
// taxonomy (1 usage, 2 data, 3 numeric/contract, 4 tolerance).

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "sepa/checkpoint.hpp"
#include "sepa/corpus.hpp"
#include "sepa/error.hpp"
#include "sepa/runner.hpp"
#include "sepa/separation.hpp"
#include "sepa/theory.hpp"

namespace {

using sepa::runner::RunConfig;

// Shared --config / --set handling: file first, overrides in order.
RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& overrides) {
  RunConfig config = config_path.empty()
                         ? RunConfig{}
                         : sepa::runner::load_config(config_path);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw sepa::UsageError("--set expects key=value, got '" + kv + "'");
    }
    sepa::runner::apply_setting(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

int run_prepare_data(const std::string& input, const std::string& output,
                     const std::string& allow_list,
                     const std::string& filter_mode) {
  const auto dialogues = sepa::corpus::read_dialogue_file(input);
  std::vector<sepa::corpus::StringPair> pairs;
  for (const auto& d : dialogues) {
    auto turns = sepa::corpus::extract_single_turn(d);
    pairs.insert(pairs.end(), turns.begin(), turns.end());
  }
  std::size_t dropped = 0, replaced = 0;
  if (!allow_list.empty()) {
    std::ifstream in(allow_list);
    if (!in) throw sepa::DataError("cannot read token list " + allow_list);
    std::unordered_set<std::string> allowed;
    std::string token;
    while (in >> token) allowed.insert(token);
    const auto mode = filter_mode == "replace_unk"
                          ? sepa::corpus::FilterMode::replace_unk
                          : sepa::corpus::FilterMode::drop;
    auto filtered = sepa::corpus::filter_by_token_list(pairs, allowed, mode);
    dropped = filtered.dropped;
    replaced = filtered.replaced;
    pairs = std::move(filtered.pairs);
  }
  sepa::corpus::write_pair_file(output, pairs);
  const auto stats = sepa::corpus::count_one_to_many(pairs);
  std::cout << "pairs: " << stats.pair_count
            << "\nmulti_response_contexts: " << stats.multi_response_contexts
            << "\nmax_responses_per_context: "
            << stats.max_responses_per_context << "\ndropped: " << dropped
            << "\nreplaced_tokens: " << replaced << '\n';
  return 0;
}

int run_gen_synthetic(const std::string& output, std::uint64_t seed,
                      int contexts, int branching, double sharing, int vocab,
                      int families) {
  sepa::corpus::SyntheticConfig config;
  config.seed = seed;
  config.n_contexts = contexts;
  config.branching_weights =
      sepa::corpus::SyntheticConfig::fixed_branching(branching);
  config.sharing = sharing;
  config.vocab_size = vocab;
  config.n_families = families;
  const auto corpus = sepa::corpus::generate_synthetic_corpus(config);
  sepa::corpus::write_pair_file(output, corpus.pairs);
  sepa::corpus::write_label_file(output + ".labels", corpus.labels);
  std::cout << "pairs: " << corpus.stats.pair_count
            << "\nmulti_response_contexts: "
            << corpus.stats.multi_response_contexts
            << "\nmax_responses_per_context: "
            << corpus.stats.max_responses_per_context
            << "\nfamilies: " << corpus.n_families << "\nwrote: " << output
            << " and " << output << ".labels\n";
  return 0;
}

int run_train(const RunConfig& config) {
  const auto artifacts = sepa::runner::train(config);
  std::cout << "checkpoint: " << artifacts.checkpoint_path
            << "\ntrain_report: " << artifacts.report_path
            << "\nbest_val_ppl: " << artifacts.best_val_ppl
            << "\nbatches: " << artifacts.total_batches << '\n';
  return 0;
}

int run_evaluate(const RunConfig& config, const std::string& checkpoint,
                 const std::string& split, const std::string& generations,
                 const std::string& report_path) {
  const auto report = sepa::runner::evaluate(config, checkpoint, split,
                                             generations, report_path);
  std::cout << "split: " << split << "\nppl: " << report.ppl
            << "\ndistinct_1: " << report.distinct_1
            << "\ndistinct_2: " << report.distinct_2
            << "\nbleu_1: " << report.bleu_1 << "\nreport: " << report_path
            << "\ngenerations: " << generations << '\n';
  return 0;
}

int run_generate(const RunConfig& config, const std::string& checkpoint_path,
                 const std::string& context_text) {
  sepa::runner::validate(config);
  const auto snap = sepa::checkpoint::read(checkpoint_path);
  sepa::corpus::Vocab vocab;
  for (const auto& token : snap.vocab) vocab.add(token);
  if (vocab.size() != snap.vocab.size()) {
    throw sepa::DataError("checkpoint vocabulary has duplicate tokens");
  }
  sepa::corpus::EmbeddingMatrix emb{vocab.size(), config.embed_dim,
                                    std::vector<double>(
                                        vocab.size() * config.embed_dim, 0.0)};
  sepa::model::ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.embed_dim = config.embed_dim;
  mc.hidden = config.hidden;
  mc.latent = config.latent;
  mc.layers = config.layers;
  mc.max_len = config.max_len;
  mc.n_groups = config.n_groups;
  mc.mlp_hidden = config.hidden;
  sepa::model::Model model(mc, emb, config.seed);
  auto tensors = model.named_params();
  std::optional<sepa::Tensor> centroids;
  const bool kmeans =
      config.variant == sepa::runner::Variant::kmeans_cvae_bow;
  if (kmeans) {
    centroids = sepa::Tensor::zeros({config.n_groups, config.embed_dim});
    tensors.emplace_back("kmeans.centroids", *centroids);
  }
  sepa::checkpoint::restore(snap, tensors);

  const std::vector<int> context = sepa::corpus::encode(
      vocab, sepa::corpus::tokenize(context_text), config.max_len);
  const std::vector<double> eps0(config.latent, 0.0);

  std::vector<int> response;
  if (config.variant == sepa::runner::Variant::sepacvae) {
    const auto groups = sepa::separation::dialogue_augment(
        config.embed_dim, config.n_groups, config.group_scale);
    auto sel = sepa::runner::select_response_test(model, context, groups);
    std::cout << sel.group << '\t'
              << sepa::corpus::decode(vocab, sel.response) << '\n';
    return 0;
  }
  if (kmeans) {
    // Group the context by its mean restored embedding, then condition on
    // that cluster's indicator vector exactly as training did.
    for (const auto& [name, t] : tensors) {
      if (name == "embedding") emb.data = t.data();
    }
    sepa::corpus::DialoguePair probe{context, {sepa::corpus::kEos}, 0};
    const std::size_t g = sepa::runner::nearest_centroid(
        *centroids, sepa::runner::mean_context_embedding(probe, emb));
    const auto groups = sepa::separation::dialogue_augment(
        config.embed_dim, config.n_groups, config.group_scale);
    sepa::Tensor ctx = model.encode_context(context, &groups.vectors[g]);
    sepa::Tensor z = model.latent_from_eps(model.prior(ctx), eps0);
    response = model.decode_greedy(z, ctx);
    std::cout << g << '\t' << sepa::corpus::decode(vocab, response) << '\n';
    return 0;
  }
  sepa::Tensor ctx = model.encode_context(context);
  sepa::Tensor z = config.variant == sepa::runner::Variant::seq2seq
                       ? sepa::Tensor::zeros({config.latent})
                       : model.latent_from_eps(model.prior(ctx), eps0);
  response = model.decode_greedy(z, ctx);
  std::cout << sepa::corpus::decode(vocab, response) << '\n';
  return 0;
}

int run_verify_theory(int instances, std::uint64_t seed, double tolerance,
                      const std::string& csv_path) {
  const auto rows = sepa::theory::run_minimizer_verification(instances, seed);
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw sepa::DataError("cannot write " + csv_path);
  sepa::theory::write_verification_csv(csv, rows);
  csv.flush();
  if (!csv) throw sepa::DataError("write failure on " + csv_path);

  double worst = 0.0;
  for (const auto& row : rows) worst = std::max(worst, row.gap);
  std::cout << "instances: " << rows.size() << "\nworst_gap: " << worst
            << "\ncsv: " << csv_path << '\n';

  // Informational: the two collapse scenarios, endpoint only.
  sepa::theory::DynamicsConfig one;
  one.scenario = sepa::theory::Scenario::one_to_many;
  const auto traj1 = sepa::theory::simulate_training_dynamics(one);
  const auto target = sepa::theory::analytic_minimizer(one.posterior1,
                                                       one.posterior2);
  std::cout << "one_to_many endpoint mu=" << traj1.back().prior_a.mu
            << " sigma=" << traj1.back().prior_a.sigma << " (minimizer mu="
            << target.mu << " sigma=" << target.sigma << ")\n";
  sepa::theory::DynamicsConfig many;
  many.scenario = sepa::theory::Scenario::many_to_one;
  const auto traj2 = sepa::theory::simulate_training_dynamics(many);
  std::cout << "many_to_one endpoint mu_a=" << traj2.back().prior_a.mu
            << " mu_b=" << traj2.back().prior_b.mu << '\n';

  if (worst > tolerance) {
    std::ostringstream msg;
    msg << "minimizer verification worst gap " << worst
        << " exceeds tolerance " << tolerance;
    throw sepa::ToleranceError(msg.str());
  }
  return 0;
}

int run_analyze_latent(const RunConfig& config, const std::string& checkpoint,
                       const std::string& latent_csv,
                       const std::string& geometry_csv) {
  const auto analysis = sepa::runner::analyze_latent(config, checkpoint,
                                                     latent_csv, geometry_csv);
  std::cout << "pairs: " << analysis.pairs
            << "\nbatches: " << analysis.geometry.batches.size();
  if (analysis.geometry.mean_inner) {
    std::cout << "\nmean_inner: " << *analysis.geometry.mean_inner;
  }
  if (analysis.geometry.mean_inter) {
    std::cout << "\nmean_inter: " << *analysis.geometry.mean_inter;
  }
  std::cout << "\nz_sensitivity: " << analysis.z_sensitivity
            << "\nlatent_csv: " << latent_csv
            << "\ngeometry_csv: " << geometry_csv << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-separation dialogue CVAE toolkit"};
  app.require_subcommand(1);

  // prepare-data
  auto* prep = app.add_subcommand(
      "prepare-data", "Convert multi-turn dialogues into single-turn pairs");
  std::string prep_input, prep_output, prep_allow, prep_mode = "drop";
  prep->add_option("--input", prep_input,
                   "Dialogue file: one dialogue per line, TAB between turns")
      ->required();
  prep->add_option("--output", prep_output, "Pair TSV to write")->required();
  prep->add_option("--allow-list", prep_allow,
                   "Token list file; pairs are filtered against it");
  prep->add_option("--filter-mode", prep_mode, "drop or replace_unk")
      ->check(CLI::IsMember({"drop", "replace_unk"}));

  // gen-synthetic
  auto* gen = app.add_subcommand(
      "gen-synthetic", "Generate a labeled synthetic dialogue corpus");
  std::string gen_output;
  std::uint64_t gen_seed = 7;
  int gen_contexts = 667, gen_branching = 3, gen_vocab = 256, gen_families = 4;
  double gen_sharing = 0.3;
  gen->add_option("--output", gen_output, "Pair TSV to write (labels go to "
                  "<output>.labels)")->required();
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--contexts", gen_contexts, "Number of distinct contexts");
  gen->add_option("--branching", gen_branching, "Responses per context");
  gen->add_option("--sharing", gen_sharing,
                  "Probability a response is reused verbatim");
  gen->add_option("--vocab", gen_vocab, "Surface token pool size");
  gen->add_option("--families", gen_families, "Response template families");

  // Options shared by the model-facing subcommands.
  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file");
    cmd->add_option("--set", overrides, "Override, key=value (repeatable)");
  };

  auto* train_cmd = app.add_subcommand("train", "Train a model variant");
  add_config(train_cmd);

  auto* eval_cmd =
      app.add_subcommand("evaluate", "Evaluate a checkpoint on a split");
  add_config(eval_cmd);
  std::string eval_checkpoint, eval_split = "val";
  std::string eval_generations = "generations.tsv";
  std::string eval_report = "eval_report.json";
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")
      ->required();
  eval_cmd->add_option("--split", eval_split, "val or test");
  eval_cmd->add_option("--generations", eval_generations,
                       "Generations TSV to write");
  eval_cmd->add_option("--report", eval_report, "Metrics JSON to write");

  auto* gen_cmd = app.add_subcommand(
      "generate", "Decode one response for a context (grouped variants print "
                  "'group<TAB>response')");
  add_config(gen_cmd);
  std::string g_checkpoint, g_context;
  gen_cmd->add_option("--checkpoint", g_checkpoint, "Checkpoint file")
      ->required();
  gen_cmd->add_option("--context", g_context, "Context text")->required();

  auto* verify = app.add_subcommand(
      "verify-theory", "Check the numeric minimizer against the closed form");
  int v_instances = 100;
  std::uint64_t v_seed = 7;
  double v_tolerance = 1e-3;
  std::string v_csv = "theory_verification.csv";
  verify->add_option("--instances", v_instances, "Random instances to run");
  verify->add_option("--seed", v_seed, "Instance seed");
  verify->add_option("--tolerance", v_tolerance,
                     "Worst permitted coordinate gap");
  verify->add_option("--csv", v_csv, "Verification table to write");

  auto* analyze = app.add_subcommand(
      "analyze-latent", "Export validation latents and cluster geometry");
  add_config(analyze);
  std::string a_checkpoint, a_latent = "latent.csv", a_geometry = "geometry.csv";
  analyze->add_option("--checkpoint", a_checkpoint, "Checkpoint file")
      ->required();
  analyze->add_option("--latent-csv", a_latent, "Per-pair latent export");
  analyze->add_option("--geometry-csv", a_geometry, "Per-batch geometry table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // CLI11 reports parse problems with its own exit-code family; fold every
    // failure into the usage slot so callers see one taxonomy. --help stays 0.
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (prep->parsed()) {
      return run_prepare_data(prep_input, prep_output, prep_allow, prep_mode);
    }
    if (gen->parsed()) {
      return run_gen_synthetic(gen_output, gen_seed, gen_contexts,
                               gen_branching, gen_sharing, gen_vocab,
                               gen_families);
    }
    if (verify->parsed()) {
      return run_verify_theory(v_instances, v_seed, v_tolerance, v_csv);
    }
    const RunConfig config = resolve_config(config_path, overrides);
    if (train_cmd->parsed()) return run_train(config);
    if (eval_cmd->parsed()) {
      return run_evaluate(config, eval_checkpoint, eval_split,
                          eval_generations, eval_report);
    }
    if (gen_cmd->parsed()) {
      return run_generate(config, g_checkpoint, g_context);
    }
    if (analyze->parsed()) {
      return run_analyze_latent(config, a_checkpoint, a_latent, a_geometry);
    }
  } catch (const sepa::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
