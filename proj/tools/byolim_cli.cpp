// byolim command-line driver. Talks to the library only through the C API.
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "byolim/byolim.h"

namespace {

struct Options {
  std::string config;
  std::string seed;
  std::string out;
  std::string data;
  std::vector<std::string> sets;
  bool quiet = false;
  // Command-specific flags as (key, value) pairs, applied last.
  std::vector<std::pair<std::string, std::string>> overrides;
};

void add_shared(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", opt.config, "Config file (key = value lines)");
  cmd->add_option("--seed", opt.seed, "Root seed (u64)");
  cmd->add_option("--out", opt.out, "Output directory");
  cmd->add_option("--data", opt.data, "Dataset root, or 'synthetic'");
  cmd->add_option("--set", opt.sets, "Override any config key: --set key=value (repeatable)");
  cmd->add_flag("-q,--quiet", opt.quiet, "Suppress progress output");
}

// Registers a valued flag that maps onto a config key.
void map_option(CLI::App* cmd, Options& opt, const std::string& flag, const std::string& key, const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&opt, key](const std::string& v) { opt.overrides.emplace_back(key, v); }, help);
}

// Registers a switch that sets a config key to a fixed value.
void map_flag(CLI::App* cmd, Options& opt, const std::string& flag, const std::string& key, const std::string& value,
              const std::string& help) {
  cmd->add_flag_callback(flag, [&opt, key, value] { opt.overrides.emplace_back(key, value); }, help);
}

int report(byolim_status s) {
  if (s != BYOLIM_OK) std::fprintf(stderr, "error: %s\n", byolim_last_error());
  return static_cast<int>(s);
}

void print_line(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

int run(const Options& opt, byolim_status (*command)(const byolim_config*)) {
  byolim_config* cfg = nullptr;
  if (byolim_config_new(&cfg) != BYOLIM_OK) return report(BYOLIM_ERR_OTHER);
  auto set = [&](const std::string& key, const std::string& value) { return byolim_config_set(cfg, key.c_str(), value.c_str()); };
  byolim_status s = BYOLIM_OK;
  if (!opt.config.empty()) s = byolim_config_load(cfg, opt.config.c_str());
  for (const auto& kv : opt.sets) {
    if (s != BYOLIM_OK) break;
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      byolim_config_free(cfg);
      return BYOLIM_ERR_CONFIG;
    }
    s = set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (s == BYOLIM_OK && !opt.seed.empty()) s = set("seed", opt.seed);
  if (s == BYOLIM_OK && !opt.out.empty()) s = set("out", opt.out);
  if (s == BYOLIM_OK && !opt.data.empty()) s = set("data", opt.data);
  for (const auto& [k, v] : opt.overrides) {
    if (s != BYOLIM_OK) break;
    s = set(k, v);
  }
  if (s == BYOLIM_OK) {
    byolim_set_log_callback(opt.quiet ? nullptr : print_line, nullptr);
    s = command(cfg);
  }
  byolim_config_free(cfg);
  return report(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"byolim: BYOL pretraining and CNN thermal fault classification"};
  app.set_version_flag("--version", byolim_version());
  app.require_subcommand(1);
  Options opt;
  byolim_status (*command)(const byolim_config*) = nullptr;

  auto* synth = app.add_subcommand("synth-data", "Write a synthetic thermal dataset as a PPM class tree");
  add_shared(synth, opt);
  map_option(synth, opt, "--classes", "data.classes", "Number of classes");
  map_option(synth, opt, "--per-class", "data.per_class", "Images per class");
  map_option(synth, opt, "--size", "data.image_size", "Image side in pixels");
  synth->callback([&] { command = byolim_cmd_synth_data; });

  auto* pre = app.add_subcommand("pretrain", "Self-supervised BYOL pretraining of the encoder");
  add_shared(pre, opt);
  map_option(pre, opt, "--tau", "byol.tau", "EMA decay of the target network");
  map_option(pre, opt, "--proj-dim", "byol.projection_dim", "Projector/predictor output width");
  map_option(pre, opt, "--epochs", "byol.epochs", "Pretraining epochs");
  map_flag(pre, opt, "--no-predictor", "byol.use_predictor", "false", "Drop the predictor head");
  map_flag(pre, opt, "--no-target", "byol.use_target_network", "false", "Use the online network as its own target");
  map_flag(pre, opt, "--no-momentum", "byol.use_momentum", "false", "Copy online weights to the target each step");
  map_flag(pre, opt, "--symmetrize", "byol.symmetrize_loss", "true", "Average the loss over both view orders");
  pre->callback([&] { command = byolim_cmd_pretrain; });

  auto* fine = app.add_subcommand("finetune", "Supervised training of encoder plus classifier head");
  add_shared(fine, opt);
  map_option(fine, opt, "--init-from", "train.init_from", "Pretrained encoder checkpoint");
  map_option(fine, opt, "--epochs", "train.max_epochs", "Maximum epochs");
  map_flag(fine, opt, "--freeze-encoder", "train.freeze_encoder", "true", "Train only the head (linear probe)");
  fine->callback([&] { command = byolim_cmd_finetune; });

  auto* eval = app.add_subcommand("evaluate", "Metrics, confusion matrix, ROC and timing for a checkpoint");
  add_shared(eval, opt);
  map_option(eval, opt, "--model", "eval.model", "Model checkpoint (default <out>/model.ckpt)");
  map_option(eval, opt, "--subset", "eval.subset", "test, val, train or all");
  eval->callback([&] { command = byolim_cmd_evaluate; });

  auto* kfold = app.add_subcommand("kfold", "k-fold cross-validation");
  add_shared(kfold, opt);
  map_option(kfold, opt, "--k", "kfold.k", "Number of folds");
  map_option(kfold, opt, "--pretrain-epochs", "kfold.pretrain_epochs", "BYOL epochs per fold (0 = none)");
  kfold->callback([&] { command = byolim_cmd_kfold; });

  auto* ablate = app.add_subcommand("ablate", "BYOL component ablation grid");
  add_shared(ablate, opt);
  map_option(ablate, opt, "--variants", "ablate.variants", "Comma list of variant ids, or 'all'");
  ablate->callback([&] { command = byolim_cmd_ablate; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return BYOLIM_ERR_CONFIG;
  }
  return run(opt, command);
}
