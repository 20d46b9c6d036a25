// Command-line surface for the adapter retrieval pipeline: dataset
// generation, training, evaluation, gradient checking, and the parameter /
// storage accounting reports. Exit codes: 0 success, 2 missing file,
// 3 configuration error, 1 anything else.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mva/config.hpp"
#include "mva/synthdata.hpp"
#include "mva/trainer.hpp"

namespace {

constexpr double kGradcheckThreshold = 1e-4;

void usage(std::FILE* out) {
  std::fprintf(out,
               "usage: mva <command> [flags]\n"
               "\n"
               "commands:\n"
               "  gen-data  --spec <config> --out <file>        write a synthetic dataset\n"
               "  train     --config <file> --data <file> --out <ckpt>\n"
               "                                                train adapters; log goes to <ckpt>.log\n"
               "  eval      --ckpt <file> --data <file>         report test-split retrieval metrics\n"
               "  params    --config <file> | --clip-b16        parameter accounting table\n"
               "  storage   --tasks <n> --ratio <r> [--full]    deployment storage units\n"
               "  gradcheck --config <file> --eps <e> [--threads <k>]\n"
               "                                                finite-difference check of the full model\n"
               "  config-keys                                   list every config key with its default\n");
}

struct Flags {
  std::map<std::string, std::string> values;
  std::vector<std::string> switches;

  bool has_switch(const std::string& name) const {
    for (const std::string& s : switches) {
      if (s == name) return true;
    }
    return false;
  }
  const std::string* find(const std::string& name) const {
    auto it = values.find(name);
    return it == values.end() ? nullptr : &it->second;
  }
};

Flags parse_flags(int argc, char** argv, int start, const std::vector<std::string>& value_flags,
                  const std::vector<std::string>& switch_flags) {
  Flags f;
  for (int i = start; i < argc; ++i) {
    const std::string arg = argv[i];
    bool matched = false;
    for (const std::string& name : switch_flags) {
      if (arg == name) {
        f.switches.push_back(name);
        matched = true;
        break;
      }
    }
    if (matched) continue;
    for (const std::string& name : value_flags) {
      if (arg == name) {
        if (i + 1 >= argc) throw std::invalid_argument("flag " + name + " needs a value");
        f.values[name] = argv[++i];
        matched = true;
        break;
      }
    }
    if (!matched) throw std::invalid_argument("unknown flag " + arg);
  }
  return f;
}

const std::string& require_flag(const Flags& f, const std::string& name) {
  const std::string* v = f.find(name);
  if (!v) throw std::invalid_argument("missing required flag " + name);
  return *v;
}

/// Exits with code 2 if an input path does not exist.
void require_file(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    std::fprintf(stderr, "error: no such file: %s\n", path.c_str());
    std::exit(2);
  }
}

int cmd_gen_data(int argc, char** argv) {
  Flags f = parse_flags(argc, argv, 2, {"--spec", "--out"}, {});
  const std::string spec_path = require_flag(f, "--spec");
  const std::string out_path = require_flag(f, "--out");
  require_file(spec_path);
  mva::RunConfig config = mva::RunConfig::from_file(spec_path);
  mva::Dataset data = mva::generate_dataset(config.dataset(), config.encoder().vocab_size);
  mva::save_dataset(data, out_path);
  std::printf("wrote %zu samples to %s\n", data.samples.size(), out_path.c_str());
  return 0;
}

int cmd_train(int argc, char** argv) {
  Flags f = parse_flags(argc, argv, 2, {"--config", "--data", "--out"}, {});
  const std::string config_path = require_flag(f, "--config");
  const std::string data_path = require_flag(f, "--data");
  const std::string out_path = require_flag(f, "--out");
  require_file(config_path);
  require_file(data_path);

  mva::RunConfig config = mva::RunConfig::from_file(config_path);
  mva::Dataset data = mva::load_dataset(data_path);
  std::vector<int> train_idx, test_idx;
  mva::split_dataset(data, train_idx, test_idx);

  const mva::TrainSettings ts = config.train();
  mva::ModelState state = mva::build_model(config.encoder(), config.adapter(), ts.seed, ts.tau_init);
  mva::TrainResult result = mva::train(state, data, train_idx, ts);

  const std::string log_path = out_path + ".log";
  {
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw std::runtime_error("cannot open " + log_path + " for writing");
    log << result.log_text();
  }
  mva::save_checkpoint(state, config, out_path);

  // Per-epoch summary: mean loss plus the last step's temperature state.
  const int steps_per_epoch = static_cast<int>(train_idx.size()) / ts.batch;
  for (std::size_t i = 0; i < result.log.size(); i += static_cast<std::size_t>(steps_per_epoch)) {
    const std::size_t end = std::min(result.log.size(), i + static_cast<std::size_t>(steps_per_epoch));
    double mean_loss = 0.0;
    for (std::size_t j = i; j < end; ++j) mean_loss += result.log[j].loss;
    mean_loss /= static_cast<double>(end - i);
    const mva::StepLog& last = result.log[end - 1];
    std::printf("epoch %zu loss %.6f tau %.6f cap %.6f\n", i / static_cast<std::size_t>(steps_per_epoch), mean_loss,
                last.tau_eff, last.cap);
  }
  std::printf("saved %s (%zu steps, log %s)\n", out_path.c_str(), result.log.size(), log_path.c_str());
  return 0;
}

int cmd_eval(int argc, char** argv) {
  Flags f = parse_flags(argc, argv, 2, {"--ckpt", "--data"}, {});
  const std::string ckpt_path = require_flag(f, "--ckpt");
  const std::string data_path = require_flag(f, "--data");
  require_file(ckpt_path);
  require_file(data_path);

  mva::Checkpoint ck = mva::load_checkpoint(ckpt_path);
  mva::Dataset data = mva::load_dataset(data_path);
  std::vector<int> train_idx, test_idx;
  mva::split_dataset(data, train_idx, test_idx);
  auto [t2v, v2t] = mva::evaluate(ck.state, data, test_idx);
  std::printf("%s\n", mva::format_metrics(t2v).c_str());
  std::printf("%s\n", mva::format_metrics(v2t).c_str());
  return 0;
}

int cmd_params(int argc, char** argv) {
  Flags f = parse_flags(argc, argv, 2, {"--config"}, {"--clip-b16"});
  mva::RunConfig config = mva::RunConfig::defaults();
  if (f.has_switch("--clip-b16")) {
    config = mva::RunConfig::clip_b16();
  } else {
    const std::string config_path = require_flag(f, "--config");
    require_file(config_path);
    config = mva::RunConfig::from_file(config_path);
  }
  const mva::ParamReport report = mva::count_params(config.encoder(), config.adapter());
  std::fputs(mva::format_param_report(report).c_str(), stdout);
  return 0;
}

int cmd_storage(int argc, char** argv) {
  Flags f = parse_flags(argc, argv, 2, {"--tasks", "--ratio"}, {"--full"});
  const int tasks = std::stoi(require_flag(f, "--tasks"));
  if (f.has_switch("--full")) {
    std::printf("%.3f\n", mva::storage_units(tasks, 1.0, false));
    return 0;
  }
  const double ratio = std::stod(require_flag(f, "--ratio"));
  std::printf("%.3f\n", mva::storage_units(tasks, ratio, true));
  return 0;
}

int cmd_gradcheck(int argc, char** argv) {
  Flags f = parse_flags(argc, argv, 2, {"--config", "--eps", "--threads"}, {});
  const std::string config_path = require_flag(f, "--config");
  require_file(config_path);
  mva::RunConfig config = mva::RunConfig::from_file(config_path);
  const double eps = f.find("--eps") ? std::stod(*f.find("--eps")) : 1e-5;
  const int threads = f.find("--threads") ? std::stoi(*f.find("--threads")) : 0;
  const double err = mva::model_gradcheck(config, eps, threads);
  std::printf("max_rel_err %.6e\n", err);
  return err > kGradcheckThreshold ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    usage(stderr);
    return 1;
  }
  const std::string command = argv[1];
  try {
    if (command == "gen-data") return cmd_gen_data(argc, argv);
    if (command == "train") return cmd_train(argc, argv);
    if (command == "eval") return cmd_eval(argc, argv);
    if (command == "params") return cmd_params(argc, argv);
    if (command == "storage") return cmd_storage(argc, argv);
    if (command == "gradcheck") return cmd_gradcheck(argc, argv);
    if (command == "config-keys") {
      std::fputs(mva::RunConfig::documented_defaults().c_str(), stdout);
      return 0;
    }
    if (command == "--help" || command == "-h" || command == "help") {
      usage(stdout);
      return 0;
    }
    std::fprintf(stderr, "error: unknown command '%s'\n", command.c_str());
    usage(stderr);
    return 1;
  } catch (const mva::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
