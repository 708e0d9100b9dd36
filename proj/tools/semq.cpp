#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semq/semq.hpp"

namespace {

std::uint32_t parse_u32(const std::string& text, const char* what) {
  const std::uint64_t v = semq::detail::parse_u64(text, what);
  if (v > 0xffffffffull) throw semq::ValidationError(std::string(what) + " is out of range");
  return static_cast<std::uint32_t>(v);
}

bool parse_bool(const std::string& text, const char* what) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw semq::ValidationError(std::string(what) + " must be true or false");
}

// Applies `key = value` config entries to the same state the flags write,
// skipping any key whose flags were given on the command line (flags win).
// Keys not claimed by bind() are rejected in finish().
struct ConfigApplier {
  const CLI::App* cmd;
  semq::ConfigFile file;
  bool active = false;
  std::set<std::string> known;

  ConfigApplier(const CLI::App* c, const std::string& path) : cmd(c) {
    if (path.empty()) return;
    file = semq::parse_config(path);
    active = true;
  }

  void bind(const std::string& key, const std::vector<std::string>& flags,
            const std::function<void(const std::string&)>& fn) {
    known.insert(key);
    if (!active || !file.has(key)) return;
    for (const std::string& flag : flags) {
      if (cmd->count(flag) > 0) return;
    }
    for (const std::string& value : file.get_all(key)) fn(value);
  }

  void finish() const {
    if (!active) return;
    for (const auto& [key, value] : file.entries) {
      if (!known.contains(key))
        throw semq::ValidationError("unknown config key '" + key + "' for '" +
                                    cmd->get_name() + "'");
    }
  }
};

struct ChannelFlagState {
  std::string modulation_text;
  std::string fading = "awgn";
  std::string confusion = "uniform";
  std::string labeling = "natural";
};

void add_channel_flags(CLI::App* cmd, semq::ChannelOptions& ch, ChannelFlagState& st) {
  cmd->add_option("--p", ch.p, "bit flip probability in [0, 0.5]");
  cmd->add_option("--snr-db,--snr_db", ch.snr_db, "symbol SNR in dB, mapped to a flip probability");
  cmd->add_option("--mod", ch.modulation, "QAM order for the SNR mapping")
      ->check(CLI::IsMember({4u, 16u, 64u, 256u}))
      ->capture_default_str();
  cmd->add_option("--modulation", st.modulation_text, "QAM order as text, e.g. 64qam");
  cmd->add_option("--fading", st.fading, "channel model for the SNR mapping")
      ->check(CLI::IsMember({"awgn", "rayleigh"}))
      ->capture_default_str();
  cmd->add_option("--confusion", st.confusion, "index confusion model")
      ->check(CLI::IsMember({"uniform", "exact"}))
      ->capture_default_str();
  cmd->add_option("--labeling", st.labeling, "index-to-bits labeling")
      ->check(CLI::IsMember({"natural", "random"}))
      ->capture_default_str();
}

void bind_channel_keys(ConfigApplier& c, semq::ChannelOptions& ch, ChannelFlagState& st) {
  // p and snr_db are two spellings of the same channel choice, so either
  // flag shadows both config keys
  const std::vector<std::string> channel_flags = {"--p", "--snr-db"};
  c.bind("p", channel_flags,
         [&ch](const std::string& v) { ch.p = semq::detail::parse_double(v, "p"); });
  c.bind("snr_db", channel_flags,
         [&ch](const std::string& v) { ch.snr_db = semq::detail::parse_double(v, "snr_db"); });
  c.bind("modulation", {"--mod", "--modulation"},
         [&st](const std::string& v) { st.modulation_text = v; });
  c.bind("fading", {"--fading"}, [&st](const std::string& v) { st.fading = v; });
  c.bind("confusion", {"--confusion"}, [&st](const std::string& v) { st.confusion = v; });
  c.bind("labeling", {"--labeling"}, [&st](const std::string& v) { st.labeling = v; });
}

void finish_channel_flags(const CLI::App* cmd, semq::ChannelOptions& ch,
                          const ChannelFlagState& st) {
  if (!st.modulation_text.empty() && cmd->count("--mod") == 0) {
    std::string digits = st.modulation_text;
    if (digits.size() > 3 && digits.substr(digits.size() - 3) == "qam")
      digits = digits.substr(0, digits.size() - 3);
    ch.modulation = static_cast<unsigned>(semq::detail::parse_u64(digits, "modulation"));
    if (ch.modulation != 4 && ch.modulation != 16 && ch.modulation != 64 &&
        ch.modulation != 256)
      throw semq::ValidationError("modulation must be one of 4qam, 16qam, 64qam, 256qam");
  }
  if (st.fading != "awgn" && st.fading != "rayleigh")
    throw semq::ValidationError("fading must be awgn or rayleigh");
  if (st.confusion != "uniform" && st.confusion != "exact")
    throw semq::ValidationError("confusion must be uniform or exact");
  if (st.labeling != "natural" && st.labeling != "random")
    throw semq::ValidationError("labeling must be natural or random");
  ch.fading = st.fading == "rayleigh" ? semq::Fading::rayleigh : semq::Fading::awgn;
  ch.confusion = st.confusion == "exact" ? semq::ConfusionModel::exact_bsc
                                         : semq::ConfusionModel::uniform_approx;
  ch.random_labeling = st.labeling == "random";
}

void add_feature_flags(CLI::App* cmd, std::string& features, std::string& mixture) {
  cmd->add_option("--features", features, "feature file (SEMF)");
  cmd->add_option("--mixture", mixture, "mixture spec file to sample features from");
}

void bind_feature_keys(ConfigApplier& c, std::string& features, std::string& mixture) {
  const std::vector<std::string> source_flags = {"--features", "--mixture"};
  c.bind("features", source_flags, [&features](const std::string& v) { features = v; });
  c.bind("mixture", source_flags, [&mixture](const std::string& v) { mixture = v; });
}

struct TrainFlagState {
  std::string init = "kmeans++";
  std::string update = "sgd";
};

void add_train_flags(CLI::App* cmd, semq::TrainConfig& cfg, TrainFlagState& st) {
  cmd->add_option("--epochs", cfg.epochs, "training epochs")->capture_default_str();
  cmd->add_option("--step-size,--step_size", cfg.step_size, "gradient step size")
      ->capture_default_str();
  cmd->add_option("--batch-size,--batch_size", cfg.batch_size,
                  "minibatch size, 0 = full batch")
      ->capture_default_str();
  cmd->add_option("--temperature", cfg.temperature, "softmax temperature for the entropy term")
      ->capture_default_str();
  cmd->add_option("--dead-threshold,--dead_threshold", cfg.dead_threshold,
                  "usage threshold below which a codeword is reset (default 1/(4K))");
  cmd->add_option("--init", st.init, "codebook initialization")
      ->check(CLI::IsMember({"kmeans++", "random"}))
      ->capture_default_str();
  cmd->add_option("--update", st.update, "update rule")
      ->check(CLI::IsMember({"sgd", "lloyd"}))
      ->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "master RNG seed")->capture_default_str();
}

void bind_train_keys(ConfigApplier& c, semq::TrainConfig& cfg, TrainFlagState& st) {
  c.bind("epochs", {"--epochs"}, [&cfg](const std::string& v) {
    cfg.epochs = semq::detail::parse_u64(v, "epochs");
  });
  c.bind("step_size", {"--step-size"}, [&cfg](const std::string& v) {
    cfg.step_size = semq::detail::parse_double(v, "step_size");
  });
  c.bind("batch_size", {"--batch-size"}, [&cfg](const std::string& v) {
    cfg.batch_size = semq::detail::parse_u64(v, "batch_size");
  });
  c.bind("temperature", {"--temperature"}, [&cfg](const std::string& v) {
    cfg.temperature = semq::detail::parse_double(v, "temperature");
  });
  c.bind("dead_threshold", {"--dead-threshold"}, [&cfg](const std::string& v) {
    cfg.dead_threshold = semq::detail::parse_double(v, "dead_threshold");
  });
  c.bind("init", {"--init"}, [&st](const std::string& v) { st.init = v; });
  c.bind("update", {"--update"}, [&st](const std::string& v) { st.update = v; });
  c.bind("seed", {"--seed"}, [&cfg](const std::string& v) {
    cfg.seed = semq::detail::parse_u64(v, "seed");
  });
}

void finish_train_flags(semq::TrainConfig& cfg, const TrainFlagState& st) {
  if (st.init != "kmeans++" && st.init != "random")
    throw semq::ValidationError("init must be kmeans++ or random");
  if (st.update != "sgd" && st.update != "lloyd")
    throw semq::ValidationError("update must be sgd or lloyd");
  cfg.init = st.init == "random" ? semq::InitScheme::random_sample : semq::InitScheme::kmeans_pp;
  cfg.update = st.update == "lloyd" ? semq::UpdateRule::lloyd : semq::UpdateRule::sgd;
}

std::vector<semq::CompareVariant> parse_variants(const std::vector<std::string>& tokens) {
  std::vector<semq::CompareVariant> out;
  for (const std::string& tok : tokens) {
    const auto parts = semq::detail::split(tok, ':');
    if (parts.size() != 3)
      throw semq::ValidationError("variant must be name:gamma:omega, got '" + tok + "'");
    semq::CompareVariant v;
    v.name = parts[0];
    v.weights.gamma = semq::detail::parse_double(parts[1], "variant gamma");
    v.weights.omega = semq::detail::parse_double(parts[2], "variant omega");
    out.push_back(std::move(v));
  }
  return out;
}

void add_config_flag(CLI::App* cmd, std::string& path) {
  cmd->add_option("--config", path, "key = value config file; explicit flags win");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"codebook learning and index-transmission analysis for semantic links"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "sample a feature set from a mixture spec");
  semq::GenOptions gen_opt;
  std::optional<std::uint64_t> gen_seed;
  std::string gen_cfg;
  add_config_flag(gen, gen_cfg);
  gen->add_option("--mixture", gen_opt.mixture_path, "mixture spec file");
  gen->add_option("--seed", gen_seed, "override the seed in the spec file");
  gen->add_option("--out", gen_opt.out_dir, "output directory")->required();
  gen->callback([&] {
    ConfigApplier cfg(gen, gen_cfg);
    cfg.bind("mixture", {"--mixture"},
             [&](const std::string& v) { gen_opt.mixture_path = v; });
    cfg.bind("seed", {"--seed"},
             [&](const std::string& v) { gen_seed = semq::detail::parse_u64(v, "seed"); });
    cfg.finish();
    gen_opt.seed_override = gen_seed;
    const semq::GenOutcome out = semq::run_gen(gen_opt);
    std::cout << "wrote " << out.features_path.string() << " (" << out.count
              << " samples, dim " << out.dim << ")\n";
    std::cout << "wrote " << out.labels_path.string() << "\n";
  });

  // train
  auto* train = app.add_subcommand("train", "learn a codebook from features");
  semq::TrainOptions train_opt;
  ChannelFlagState train_ch_st;
  TrainFlagState train_tr_st;
  std::string train_cfg;
  train_opt.k = 256;
  add_config_flag(train, train_cfg);
  add_feature_flags(train, train_opt.features_path, train_opt.mixture_path);
  train->add_option("--k", train_opt.k, "codebook size")->capture_default_str();
  train->add_option("--gamma", train_opt.weights.gamma, "entropy regularizer weight")
      ->capture_default_str();
  train->add_option("--omega", train_opt.weights.omega, "channel loss weight")
      ->capture_default_str();
  add_channel_flags(train, train_opt.channel, train_ch_st);
  add_train_flags(train, train_opt.config, train_tr_st);
  train->add_option("--out", train_opt.out_dir, "output directory")->required();
  train->callback([&] {
    ConfigApplier cfg(train, train_cfg);
    bind_feature_keys(cfg, train_opt.features_path, train_opt.mixture_path);
    cfg.bind("k", {"--k"}, [&](const std::string& v) { train_opt.k = parse_u32(v, "k"); });
    cfg.bind("gamma", {"--gamma"}, [&](const std::string& v) {
      train_opt.weights.gamma = semq::detail::parse_double(v, "gamma");
    });
    cfg.bind("omega", {"--omega"}, [&](const std::string& v) {
      train_opt.weights.omega = semq::detail::parse_double(v, "omega");
    });
    bind_channel_keys(cfg, train_opt.channel, train_ch_st);
    bind_train_keys(cfg, train_opt.config, train_tr_st);
    cfg.finish();
    finish_channel_flags(train, train_opt.channel, train_ch_st);
    finish_train_flags(train_opt.config, train_tr_st);
    const semq::TrainOutcome out = semq::run_train(train_opt);
    const semq::EpochRecord& last = out.report.epochs.back();
    std::cout << "wrote " << out.codebook_path.string() << " (K=" << out.codebook.size()
              << ", dim " << out.codebook.dim() << ")\n";
    std::cout << "final quantization_loss=" << semq::fmt_double(last.quantization_loss)
              << " entropy_nats=" << semq::fmt_double(last.entropy_nats)
              << " total_loss=" << semq::fmt_double(last.total_loss) << "\n";
  });

  // simulate
  auto* sim = app.add_subcommand("simulate", "Monte Carlo run of the digital link");
  semq::SimulateOptions sim_opt;
  ChannelFlagState sim_ch_st;
  std::string sim_cfg;
  add_config_flag(sim, sim_cfg);
  add_feature_flags(sim, sim_opt.features_path, sim_opt.mixture_path);
  sim->add_option("--codebook", sim_opt.codebook_path, "codebook file (SEMC)");
  add_channel_flags(sim, sim_opt.channel, sim_ch_st);
  sim->add_option("--trials", sim_opt.trials, "independent channel passes")
      ->capture_default_str();
  sim->add_option("--seed", sim_opt.seed, "master RNG seed")->capture_default_str();
  sim->add_option("--out", sim_opt.out_dir, "output directory")->required();
  sim->callback([&] {
    ConfigApplier cfg(sim, sim_cfg);
    bind_feature_keys(cfg, sim_opt.features_path, sim_opt.mixture_path);
    cfg.bind("codebook", {"--codebook"},
             [&](const std::string& v) { sim_opt.codebook_path = v; });
    bind_channel_keys(cfg, sim_opt.channel, sim_ch_st);
    cfg.bind("trials", {"--trials"}, [&](const std::string& v) {
      sim_opt.trials = semq::detail::parse_u64(v, "trials");
    });
    cfg.bind("seed", {"--seed"}, [&](const std::string& v) {
      sim_opt.seed = semq::detail::parse_u64(v, "seed");
    });
    cfg.finish();
    finish_channel_flags(sim, sim_opt.channel, sim_ch_st);
    const semq::SimulateOutcome out = semq::run_simulate(sim_opt);
    std::cout << "mse_mean=" << semq::fmt_double(out.report.mse_mean)
              << " mse_stderr=" << semq::fmt_double(out.report.mse_stderr)
              << " index_error_rate=" << semq::fmt_double(out.report.index_error_rate)
              << " analytic_pe=" << semq::fmt_double(out.report.analytic_pe) << "\n";
  });

  // sweep
  auto* sweep = app.add_subcommand("sweep", "train per candidate K and pick the objective minimum");
  semq::SweepOptions sweep_opt;
  ChannelFlagState sweep_ch_st;
  TrainFlagState sweep_tr_st;
  std::string sweep_cfg;
  add_config_flag(sweep, sweep_cfg);
  add_feature_flags(sweep, sweep_opt.features_path, sweep_opt.mixture_path);
  sweep->add_option("--ks", sweep_opt.ks, "candidate codebook sizes")->delimiter(',');
  sweep->add_option("--lambda", sweep_opt.lambda, "rate weight in the objective")
      ->capture_default_str();
  sweep->add_option("--ps", sweep_opt.ps, "extra flip probabilities for the grid output")
      ->delimiter(',');
  sweep->add_option("--gamma", sweep_opt.weights.gamma, "entropy regularizer weight")
      ->capture_default_str();
  sweep->add_option("--omega", sweep_opt.weights.omega, "channel loss weight")
      ->capture_default_str();
  add_channel_flags(sweep, sweep_opt.channel, sweep_ch_st);
  add_train_flags(sweep, sweep_opt.config, sweep_tr_st);
  sweep->add_option("--out", sweep_opt.out_dir, "output directory")->required();
  sweep->callback([&] {
    ConfigApplier cfg(sweep, sweep_cfg);
    bind_feature_keys(cfg, sweep_opt.features_path, sweep_opt.mixture_path);
    cfg.bind("ks", {"--ks"}, [&](const std::string& v) {
      for (const std::string& piece : semq::detail::split(v, ','))
        sweep_opt.ks.push_back(parse_u32(piece, "ks"));
    });
    cfg.bind("lambda", {"--lambda"}, [&](const std::string& v) {
      sweep_opt.lambda = semq::detail::parse_double(v, "lambda");
    });
    cfg.bind("ps", {"--ps"}, [&](const std::string& v) {
      for (const std::string& piece : semq::detail::split(v, ','))
        sweep_opt.ps.push_back(semq::detail::parse_double(piece, "ps"));
    });
    cfg.bind("gamma", {"--gamma"}, [&](const std::string& v) {
      sweep_opt.weights.gamma = semq::detail::parse_double(v, "gamma");
    });
    cfg.bind("omega", {"--omega"}, [&](const std::string& v) {
      sweep_opt.weights.omega = semq::detail::parse_double(v, "omega");
    });
    bind_channel_keys(cfg, sweep_opt.channel, sweep_ch_st);
    bind_train_keys(cfg, sweep_opt.config, sweep_tr_st);
    cfg.finish();
    finish_channel_flags(sweep, sweep_opt.channel, sweep_ch_st);
    finish_train_flags(sweep_opt.config, sweep_tr_st);
    const semq::SweepOutcome out = semq::run_sweep(sweep_opt);
    std::cout << "chosen K=" << out.result.chosen_k << " over " << out.result.rows.size()
              << " candidates\n";
  });

  // compare
  auto* cmp = app.add_subcommand("compare", "train loss variants and simulate them over a p grid");
  semq::CompareOptions cmp_opt;
  ChannelFlagState cmp_ch_st;
  TrainFlagState cmp_tr_st;
  std::vector<std::string> variant_tokens;
  std::string cmp_cfg;
  cmp_opt.k = 256;
  add_config_flag(cmp, cmp_cfg);
  add_feature_flags(cmp, cmp_opt.features_path, cmp_opt.mixture_path);
  cmp->add_option("--k", cmp_opt.k, "codebook size")->capture_default_str();
  cmp->add_option("--variants", variant_tokens,
                  "comma list of name:gamma:omega, e.g. baseline:0:0,aware:0:0.1")
      ->delimiter(',');
  cmp->add_option("--ps", cmp_opt.ps, "flip probabilities to simulate at")->delimiter(',');
  add_channel_flags(cmp, cmp_opt.channel, cmp_ch_st);
  cmp->add_option("--trials", cmp_opt.trials, "channel passes per (variant, p)")
      ->capture_default_str();
  add_train_flags(cmp, cmp_opt.config, cmp_tr_st);
  cmp->add_option("--out", cmp_opt.out_dir, "output directory")->required();
  cmp->callback([&] {
    ConfigApplier cfg(cmp, cmp_cfg);
    bind_feature_keys(cfg, cmp_opt.features_path, cmp_opt.mixture_path);
    cfg.bind("k", {"--k"}, [&](const std::string& v) { cmp_opt.k = parse_u32(v, "k"); });
    cfg.bind("variants", {"--variants"}, [&](const std::string& v) {
      for (const std::string& piece : semq::detail::split(v, ','))
        variant_tokens.push_back(piece);
    });
    cfg.bind("ps", {"--ps"}, [&](const std::string& v) {
      for (const std::string& piece : semq::detail::split(v, ','))
        cmp_opt.ps.push_back(semq::detail::parse_double(piece, "ps"));
    });
    bind_channel_keys(cfg, cmp_opt.channel, cmp_ch_st);
    cfg.bind("trials", {"--trials"}, [&](const std::string& v) {
      cmp_opt.trials = semq::detail::parse_u64(v, "trials");
    });
    bind_train_keys(cfg, cmp_opt.config, cmp_tr_st);
    cfg.finish();
    finish_channel_flags(cmp, cmp_opt.channel, cmp_ch_st);
    finish_train_flags(cmp_opt.config, cmp_tr_st);
    cmp_opt.variants = parse_variants(variant_tokens);
    const semq::CompareOutcome out = semq::run_compare(cmp_opt);
    std::cout << "wrote " << out.rows.size() << " comparison rows\n";
  });

  // analyze
  auto* ana = app.add_subcommand("analyze", "closed-form distortion and usage report for a codebook");
  semq::AnalyzeOptions ana_opt;
  ChannelFlagState ana_ch_st;
  std::string ana_cfg;
  add_config_flag(ana, ana_cfg);
  add_feature_flags(ana, ana_opt.features_path, ana_opt.mixture_path);
  ana->add_option("--codebook", ana_opt.codebook_path, "codebook file (SEMC)");
  add_channel_flags(ana, ana_opt.channel, ana_ch_st);
  ana->add_flag("--confusion-csv", ana_opt.write_confusion,
                "also export the full confusion matrix as CSV");
  ana->add_option("--seed", ana_opt.seed, "master RNG seed")->capture_default_str();
  ana->add_option("--out", ana_opt.out_dir, "output directory")->required();
  ana->callback([&] {
    ConfigApplier cfg(ana, ana_cfg);
    bind_feature_keys(cfg, ana_opt.features_path, ana_opt.mixture_path);
    cfg.bind("codebook", {"--codebook"},
             [&](const std::string& v) { ana_opt.codebook_path = v; });
    bind_channel_keys(cfg, ana_opt.channel, ana_ch_st);
    cfg.bind("confusion_csv", {"--confusion-csv"}, [&](const std::string& v) {
      ana_opt.write_confusion = parse_bool(v, "confusion_csv");
    });
    cfg.bind("seed", {"--seed"}, [&](const std::string& v) {
      ana_opt.seed = semq::detail::parse_u64(v, "seed");
    });
    cfg.finish();
    finish_channel_flags(ana, ana_opt.channel, ana_ch_st);
    const semq::AnalyzeOutcome out = semq::run_analyze(ana_opt);
    std::cout << "d_quant=" << semq::fmt_double(out.distortion.d_quant)
              << " d_channel=" << semq::fmt_double(out.distortion.d_channel)
              << " d_total=" << semq::fmt_double(out.distortion.d_total)
              << " entropy_nats=" << semq::fmt_double(out.entropy_nats) << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const semq::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const semq::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
