#include "swarmseg/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "swarmseg/baselines.hpp"
#include "swarmseg/config.hpp"
#include "swarmseg/dataset.hpp"
#include "swarmseg/errors.hpp"
#include "swarmseg/metrics.hpp"
#include "swarmseg/swarm.hpp"
#include "swarmseg/train.hpp"

namespace swarmseg {

namespace {

using nlohmann::json;

struct CommonFlags {
  std::string config_path;
  std::string fusion = "hard";
  long long seed = -1;
  int query_dim = -1;
  int key_dim = -1;
  int agents = -1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--seed", seed, "Override the config seed");
    cmd->add_option("--fusion", fusion, "Fusion mode: hard|soft|stacked")
        ->check(CLI::IsMember({"hard", "soft", "stacked"}));
    cmd->add_option("--query-dim", query_dim, "Override model.query_dim (Q)");
    cmd->add_option("--key-dim", key_dim, "Override model.key_dim (K)");
    cmd->add_option("--agents", agents, "Override the agent count (N)");
  }

  EngineConfig resolve() const {
    EngineConfig cfg =
        config_path.empty() ? EngineConfig{} : EngineConfig::from_file(config_path);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (query_dim > 0) cfg.model.query_dim = query_dim;
    if (key_dim > 0) cfg.model.key_dim = key_dim;
    if (agents > 0) cfg.agents = agents;
    cfg.validate();
    return cfg;
  }

  FusionMode fusion_mode() const { return fusion_mode_from_string(fusion); }
};

std::string sample_dir_name(int i) {
  std::ostringstream os;
  os << "sample_" << std::setw(6) << std::setfill('0') << i;
  return os.str();
}

int cmd_gen_world(const CommonFlags& flags, const std::string& out_dir, int samples) {
  const EngineConfig cfg = flags.resolve();
  save_dataset(out_dir, cfg, samples);
  std::cout << "wrote " << samples << " samples under " << out_dir << "\n";
  return 0;
}

int cmd_train(const CommonFlags& flags, const std::string& data_dir, const std::string& out_path,
              std::string history_path, int epochs_override) {
  EngineConfig cfg = flags.resolve();
  if (epochs_override > 0) cfg.train.epochs = epochs_override;
  cfg.train.fusion = flags.fusion_mode() == FusionMode::kHard ? FusionMode::kSoft
                                                              : flags.fusion_mode();
  const auto dataset = load_dataset(data_dir);
  TrainResult result = train(dataset, cfg);
  result.params.save(out_path);
  if (history_path.empty()) history_path = out_path + ".history.csv";
  save_history_csv(history_path, result.history);
  std::cout << "wrote weights to " << out_path << " and history to " << history_path << "\n";
  return 0;
}

int cmd_simulate(const CommonFlags& flags, const std::string& data_dir,
                 const std::string& weights_path, const std::string& out_dir, bool parallel) {
  const EngineConfig cfg = flags.resolve();
  const ParamBundle params = ParamBundle::load(weights_path);
  const auto dataset = load_dataset(data_dir);
  std::filesystem::create_directories(out_dir);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const RoundResult round = run_round(dataset[i], params, flags.fusion_mode(), cfg, parallel);
    save_round_result(out_dir + "/" + sample_dir_name(static_cast<int>(i)), round);
  }
  std::cout << "simulated " << dataset.size() << " rounds into " << out_dir << "\n";
  return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& data_dir,
             const std::string& weights_path, const std::string& out_path, bool with_baselines,
             const std::string& dump_dir) {
  const EngineConfig cfg = flags.resolve();
  ParamBundle params = ParamBundle::load(weights_path);
  const auto dataset = load_dataset(data_dir);
  const EvalReport report =
      evaluate_checkpoint(dataset, params, flags.fusion_mode(), cfg);
  json j = json::parse(eval_report_to_json(report));
  if (with_baselines) {
    const BaselineComparison cmp =
        evaluate_baselines(dataset, params, cfg, flags.fusion_mode());
    j["baselines"] = json::parse(baseline_comparison_to_json(cmp));
  }
  if (!dump_dir.empty()) {
    std::filesystem::create_directories(dump_dir);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const RoundResult round = run_round(dataset[i], params, flags.fusion_mode(), cfg);
      for (int t = 0; t < dataset[i].agent_count(); ++t)
        write_mask_pgm(dump_dir + "/" + sample_dir_name(static_cast<int>(i)) + "_agent_" +
                           std::to_string(t) + ".pgm",
                       round.fused_masks[t], dataset[i].classes);
    }
  }
  const std::string text = j.dump(2);
  std::cout << text << "\n";
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    os << text << "\n";
    if (!os) throw data_error("cannot write metrics to '" + out_path + "'");
  }
  return 0;
}

int cmd_bench(const CommonFlags& flags, std::vector<int> query_dims, const std::string& out_path) {
  const EngineConfig cfg = flags.resolve();
  if (query_dims.empty()) query_dims = {16, 32, 64};
  json rows = json::array();
  for (int q : query_dims) {
    const LedgerPrediction p =
        ledger_predict(cfg.view.rows, cfg.view.cols, cfg.world.classes, cfg.view.feat_rows,
                       cfg.view.feat_cols, q, cfg.agents, 0.0);
    rows.push_back({{"query_dim", q},
                    {"target_tx_scalars", p.target_tx_scalars},
                    {"target_tx_fraction_of_input", p.target_tx_fraction},
                    {"naive_scalars", p.naive_scalars}});
  }
  json j;
  j["view"] = {{"rows", cfg.view.rows},
               {"cols", cfg.view.cols},
               {"feat_rows", cfg.view.feat_rows},
               {"feat_cols", cfg.view.feat_cols}};
  j["classes"] = cfg.world.classes;
  j["agents"] = cfg.agents;
  j["rows"] = rows;
  const std::string text = j.dump(2);
  std::cout << text << "\n";
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    os << text << "\n";
    if (!os) throw data_error("cannot write bench report to '" + out_path + "'");
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"swarmseg: bandwidth-accounted collaborative segmentation engine"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, sim_flags, eval_flags, bench_flags;

  auto* gen = app.add_subcommand("gen-world", "Generate a procedural scene dataset");
  gen_flags.attach(gen);
  std::string gen_out = "dataset";
  int gen_samples = 8;
  gen->add_option("--out", gen_out, "Output dataset directory");
  gen->add_option("--samples", gen_samples, "Number of samples to generate");

  auto* tr = app.add_subcommand("train", "Train the engine on a dataset");
  train_flags.attach(tr);
  std::string train_data, train_out = "weights.bin", train_history;
  int train_epochs = -1;
  tr->add_option("--data", train_data, "Dataset directory")->required();
  tr->add_option("--out", train_out, "Weight checkpoint path");
  tr->add_option("--history", train_history, "Loss history CSV path");
  tr->add_option("--epochs", train_epochs, "Override train.epochs");

  auto* sim = app.add_subcommand("simulate", "Run collaborative rounds and persist results");
  sim_flags.attach(sim);
  std::string sim_data, sim_weights, sim_out = "rounds";
  bool sim_parallel = false;
  sim->add_option("--data", sim_data, "Dataset directory")->required();
  sim->add_option("--weights", sim_weights, "Weight checkpoint")->required();
  sim->add_option("--out", sim_out, "Output directory");
  sim->add_flag("--parallel", sim_parallel, "Run pair pipelines on worker threads");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_flags.attach(ev);
  std::string eval_data, eval_weights, eval_out, eval_dump;
  bool eval_baselines = false;
  ev->add_option("--data", eval_data, "Dataset directory")->required();
  ev->add_option("--weights", eval_weights, "Weight checkpoint")->required();
  ev->add_option("--out", eval_out, "Metrics JSON output path");
  ev->add_flag("--baselines", eval_baselines, "Also score the baseline comparators");
  ev->add_option("--dump-masks", eval_dump, "Directory for fused-mask PGM dumps");

  auto* bench = app.add_subcommand("bench", "Report the analytic communication-cost model");
  bench_flags.attach(bench);
  std::vector<int> bench_q;
  std::string bench_out;
  bench->add_option("--query-dims", bench_q, "Query dims to tabulate");
  bench->add_option("--out", bench_out, "Report JSON output path");

  if (argc <= 1) {
    std::cerr << app.help() << "\n";
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // CLI11 treats -h as a "parse error" with exit code 0.
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_world(gen_flags, gen_out, gen_samples);
    if (tr->parsed())
      return cmd_train(train_flags, train_data, train_out, train_history, train_epochs);
    if (sim->parsed()) return cmd_simulate(sim_flags, sim_data, sim_weights, sim_out, sim_parallel);
    if (ev->parsed())
      return cmd_eval(eval_flags, eval_data, eval_weights, eval_out, eval_baselines, eval_dump);
    if (bench->parsed()) return cmd_bench(bench_flags, bench_q, bench_out);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  }
  std::cerr << app.help() << "\n";
  return 2;
}

}  // namespace swarmseg
