// Command-line front end: train, eval, probe, embed, pca, count, budget, sweep, synth, split.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "egocharm/pipeline.hpp"

namespace {

using namespace egocharm;

/// Flags shared by every run-style subcommand. Values land in a key-value map
/// layered over an optional --config file, then resolved into a RunConfig.
struct RunFlags {
  std::string config_file;
  std::vector<std::string> sets;
  KeyValues flags;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key = value run configuration file");
    cmd->add_option("--set", sets, "override one key (key=value), repeatable");
    auto opt = [&](const char* name, const char* key, const char* help) {
      cmd->add_option_function<std::string>(name, [this, key](const std::string& v) { flags[key] = v; }, help);
    };
    opt("--manifest", "manifest", "dataset manifest (JSON)");
    opt("--model", "model", "model spec file");
    opt("--checkpoint", "checkpoint", "trained model checkpoint");
    opt("--out", "out", "output directory (default $EGOCHARM_OUT/<command>-<hash>)");
    opt("--seed", "seed", "random seed");
    opt("--lr", "learning_rate", "initial learning rate");
    opt("--batch-size", "batch_size", "mini-batch size");
    opt("--epochs", "max_epochs", "number of epochs");
    opt("--lr-gamma", "lr_gamma", "step decay factor");
    opt("--lr-step", "lr_step_epochs", "epochs between decays");
    opt("--class-weights", "class_weights", "inverse_frequency or uniform");
    opt("--test-fraction", "test_fraction", "share of samples held out by participant");
    opt("--samples-per-class", "samples_per_class", "cap per class (0 = all)");
    opt("--stride", "stride_s", "window stride in seconds (0 = manifest)");
    opt("--folds", "folds", "cross-validation folds");
    opt("--rate", "rate_hz", "override model sampling rate");
    opt("--hl-window", "hl_window_s", "override high-level window seconds");
  }

  RunConfig resolve() const {
    KeyValues kv;
    if (!config_file.empty()) kv = parse_key_values(read_text_file(config_file));
    for (const auto& [k, v] : flags) kv[k] = v;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      require(eq != std::string::npos, ErrorCode::SpecParseError, "--set expects key=value, got '" + s + "'");
      kv[detail::trim(s.substr(0, eq))] = detail::trim(s.substr(eq + 1));
    }
    return apply_key_values(RunConfig{}, kv);
  }
};

void print_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::cout << "macro_f1 " << r.macro_f1 << ", micro_acc " << r.micro_accuracy << " -> " << dir.string() << '\n';
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = detail::trim(item);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    require(ec == std::errc() && ptr == t.data() + t.size() && !t.empty(), ErrorCode::InvalidArgument,
            "sweep value '" + t + "' is not a number");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical IMU activity recognition toolkit"};
  app.require_subcommand(1);
  int exit_code = 0;

  RunFlags train_flags, probe_flags, embed_flags, pca_flags, sweep_flags, split_flags;
  auto* train = app.add_subcommand("train", "train encoder and head from high-level labels");
  train_flags.attach(train);

  EvalOptions eval_opt;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  eval->add_option("--checkpoint", eval_opt.checkpoint, "trained model checkpoint")->required();
  eval->add_option("--manifest", eval_opt.manifest, "dataset manifest")->required();
  eval->add_option("--split", eval_opt.split, "split.json whose test participants are evaluated");
  eval->add_option("--stride", eval_opt.stride_s, "window stride in seconds (0 = manifest)");
  eval->add_option("--out", eval_opt.out, "output directory");

  auto* probe = app.add_subcommand("probe", "train a probing layer on a frozen encoder with k-fold CV");
  probe_flags.attach(probe);
  auto* embed = app.add_subcommand("embed", "dump low-level embeddings as CSV");
  embed_flags.attach(embed);
  auto* pca = app.add_subcommand("pca", "2-D PCA of low-level embeddings");
  pca_flags.attach(pca);

  std::string count_spec;
  std::string count_out;
  bool count_csv = false;
  auto* countc = app.add_subcommand("count", "parameter and FLOP counts of a model spec");
  countc->add_option("spec", count_spec, "model spec file")->required();
  countc->add_flag("--csv", count_csv, "print CSV instead of the table");
  countc->add_option("--out", count_out, "also write count.csv into this directory");

  std::string budget_spec;
  auto* budget = app.add_subcommand("budget", "check the encoder against the on-chip parameter budget");
  budget->add_option("spec", budget_spec, "model spec file")->required();

  std::string axis;
  std::string values;
  bool parallel = false;
  auto* sweep = app.add_subcommand("sweep", "train and evaluate once per value of one axis");
  sweep_flags.attach(sweep);
  sweep->add_option("--axis", axis, "samples_per_class, rate_hz or hl_window_s")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_flag("--parallel", parallel, "run values concurrently");

  SynthSpec synth_spec;
  std::string synth_level = "high";
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic labelled dataset");
  synth->add_option("--level", synth_level, "high or low");
  synth->add_option("--participants", synth_spec.participants, "participant count");
  synth->add_option("--recordings-per-class", synth_spec.recordings_per_class, "recordings per participant and class");
  synth->add_option("--duration", synth_spec.duration_s, "seconds per recording");
  synth->add_option("--noise", [&](const std::vector<std::string>& v) {
    for (auto& m : synth_spec.motifs) m.noise_std = std::stod(v.front());
    return true;
  }, "sensor noise std for every motif");
  synth->add_option("--seed", synth_spec.seed, "random seed");
  synth->add_option("--out", synth_out, "output directory");

  auto* split = app.add_subcommand("split", "participant-disjoint stratified split and folds");
  split_flags.attach(split);

  try {
    CLI11_PARSE(app, argc, argv);
    if (train->parsed()) {
      const auto out = run_train(train_flags.resolve());
      print_report(out.report, out.dir);
    } else if (eval->parsed()) {
      std::filesystem::path dir;
      print_report(run_eval(eval_opt, &dir), dir);
    } else if (probe->parsed()) {
      const auto out = run_probe(probe_flags.resolve());
      std::cout << "mean macro_f1 " << out.mean_macro_f1 << " over " << out.folds.size() << " folds -> "
                << out.dir.string() << '\n';
    } else if (embed->parsed()) {
      std::cout << run_embed(embed_flags.resolve()).string() << "/embeddings.csv\n";
    } else if (pca->parsed()) {
      const auto out = run_pca(pca_flags.resolve());
      std::cout << "silhouette " << out.silhouette << " -> " << out.dir.string() << '\n';
    } else if (countc->parsed()) {
      const auto counts = count_model(load_model_spec(count_spec));
      std::cout << (count_csv ? counts_csv(counts) : counts_table(counts));
      if (!count_out.empty()) write_text_file(std::filesystem::path(count_out) / "count.csv", counts_csv(counts));
    } else if (budget->parsed()) {
      const auto report = check_deploy_budget(load_model_spec(budget_spec));
      std::cout << budget_line(report) << '\n';
      exit_code = report.pass ? 0 : 1;
    } else if (sweep->parsed()) {
      std::filesystem::path dir;
      const auto rows = run_sweep(sweep_flags.resolve(), parse_sweep_axis(axis), parse_values(values), parallel, &dir);
      for (const auto& r : rows) {
        std::cout << axis << '=' << detail::format_number(r.value) << ": ";
        if (r.report)
          std::cout << "macro_f1 " << r.report->macro_f1 << ", micro_acc " << r.report->micro_accuracy << '\n';
        else
          std::cout << "failed (" << r.error << ")\n";
      }
      std::cout << "-> " << (dir / "sweep.csv").string() << '\n';
    } else if (synth->parsed()) {
      synth_spec.level = parse_activity_level(synth_level);
      DatasetManifest m = DatasetManifest::defaults(synth_spec.level);
      m.classes = synth_spec.class_names();
      m.rate_hz = synth_spec.native_rate_hz;
      std::filesystem::path dir = synth_out;
      if (dir.empty()) {
        const char* env = std::getenv(kOutputRootEnv);
        dir = std::filesystem::path(env && *env ? env : "runs") / ("synth-" + synth_level + "-" + std::to_string(synth_spec.seed));
      }
      write_dataset(dir, m, generate_synthetic(synth_spec));
      std::cout << (dir / "manifest.json").string() << '\n';
    } else if (split->parsed()) {
      std::filesystem::path dir;
      const auto plan = run_split(split_flags.resolve(), &dir);
      std::cout << plan.train_participants.size() << " train / " << plan.test_participants.size()
                << " test participants, max class-share deviation " << plan.max_share_deviation() << " -> "
                << (dir / "split.json").string() << '\n';
    }
  } catch (const Error& e) {
    const nlohmann::json j = {{"error", std::string(to_string(e.code()))}, {"message", e.detail()}};
    std::cerr << j.dump() << '\n';
    return 2;
  } catch (const std::exception& e) {
    const nlohmann::json j = {{"error", "InternalError"}, {"message", e.what()}};
    std::cerr << j.dump() << '\n';
    return 3;
  }
  return exit_code;
}
