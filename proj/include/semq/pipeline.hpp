#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <json.hpp>

#include "semq/analytics.hpp"
#include "semq/channel.hpp"
#include "semq/core.hpp"
#include "semq/io.hpp"
#include "semq/losses.hpp"
#include "semq/mixture.hpp"
#include "semq/quantizer.hpp"
#include "semq/simulate.hpp"
#include "semq/train.hpp"

namespace semq {

inline const char* name_of(InitScheme s) {
  return s == InitScheme::kmeans_pp ? "kmeans++" : "random";
}
inline const char* name_of(UpdateRule r) { return r == UpdateRule::sgd ? "sgd" : "lloyd"; }
inline const char* name_of(ConfusionModel m) {
  return m == ConfusionModel::uniform_approx ? "uniform" : "exact";
}
inline const char* name_of(Fading f) { return f == Fading::awgn ? "awgn" : "rayleigh"; }

/// Channel description as it arrives from flags or a config file. The flip
/// probability is either given directly or mapped from an SNR point.
struct ChannelOptions {
  std::optional<double> p;
  std::optional<double> snr_db;
  unsigned modulation = 64;
  Fading fading = Fading::awgn;
  ConfusionModel confusion = ConfusionModel::uniform_approx;
  bool random_labeling = false;

  bool specified() const { return p.has_value() || snr_db.has_value(); }

  double resolve_p() const {
    if (p && snr_db)
      throw ValidationError("give either --p or --snr-db, not both");
    if (p) {
      if (!(*p >= 0.0 && *p <= 0.5))
        throw ValidationError("flip probability must lie in [0, 0.5]");
      return *p;
    }
    if (snr_db) {
      SnrSpec spec;
      spec.snr_db = *snr_db;
      spec.modulation_order = modulation;
      spec.fading = fading;
      return snr_to_flip_probability(spec);
    }
    return 0.0;
  }

  ChannelSpec build_at(std::uint32_t k, std::uint64_t seed, double flip_p) const {
    BitLabeling lab =
        random_labeling ? BitLabeling::random_perm(k, seed) : BitLabeling::natural(k);
    return ChannelSpec(flip_p, confusion, std::move(lab));
  }

  ChannelSpec build(std::uint32_t k, std::uint64_t seed) const {
    return build_at(k, seed, resolve_p());
  }
};

/// Key/value echo block written at the top of report CSVs and mirrored as
/// the "config" object in the JSON twin.
class ConfigEcho {
public:
  template <class T>
  void add(std::string key, const T& value) {
    if constexpr (std::is_floating_point_v<T>) {
      kv_.emplace_back(std::move(key), fmt_double(value));
    } else if constexpr (std::is_integral_v<T>) {
      kv_.emplace_back(std::move(key), std::to_string(value));
    } else {
      kv_.emplace_back(std::move(key), std::string(value));
    }
  }

  std::string csv_header() const {
    std::string out;
    for (const auto& [k, v] : kv_) out += "# " + k + " = " + v + "\n";
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : kv_) j[k] = v;
    return j;
  }

private:
  std::vector<std::pair<std::string, std::string>> kv_;
};

namespace detail {

inline std::filesystem::path ensure_out_dir(const std::string& out_dir) {
  if (out_dir.empty()) throw ValidationError("--out directory required");
  std::filesystem::path dir(out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());
  return dir;
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_file(path.string(), j.dump(2) + "\n");
}

inline FeatureSet load_feature_source(const std::string& features_path,
                                      const std::string& mixture_path) {
  if (features_path.empty() == mixture_path.empty())
    throw ValidationError("exactly one of --features or --mixture is required");
  if (!features_path.empty()) return read_features(features_path);
  return generate_mixture(parse_mixture_spec(mixture_path));
}

inline void echo_feature_source(ConfigEcho& echo, const std::string& features_path,
                                const std::string& mixture_path) {
  if (!features_path.empty())
    echo.add("features", features_path);
  else
    echo.add("mixture", mixture_path);
}

inline void echo_channel(ConfigEcho& echo, const ChannelOptions& ch) {
  echo.add("p", ch.resolve_p());
  if (ch.snr_db) {
    echo.add("snr_db", *ch.snr_db);
    echo.add("modulation", std::to_string(ch.modulation) + "qam");
    echo.add("fading", name_of(ch.fading));
  }
  echo.add("confusion", name_of(ch.confusion));
  echo.add("labeling", ch.random_labeling ? "random" : "natural");
}

inline void echo_train_config(ConfigEcho& echo, const TrainConfig& cfg, std::uint32_t k) {
  echo.add("epochs", cfg.epochs);
  echo.add("step_size", cfg.step_size);
  echo.add("batch_size", cfg.batch_size);
  echo.add("temperature", cfg.temperature);
  echo.add("init", name_of(cfg.init));
  echo.add("update", name_of(cfg.update));
  echo.add("dead_threshold",
           cfg.dead_threshold ? *cfg.dead_threshold : 1.0 / (4.0 * static_cast<double>(k)));
  echo.add("seed", cfg.seed);
}

}  // namespace detail

// ---------------------------------------------------------------- gen

struct GenOptions {
  std::string mixture_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
};

struct GenOutcome {
  std::filesystem::path features_path;
  std::filesystem::path labels_path;
  std::size_t count = 0;
  std::size_t dim = 0;
};

inline GenOutcome run_gen(const GenOptions& opt) {
  if (opt.mixture_path.empty()) throw ValidationError("gen requires --mixture");
  MixtureSpec spec = parse_mixture_spec(opt.mixture_path);
  if (opt.seed_override) spec.seed = *opt.seed_override;
  auto [features, labels] = generate_mixture_labeled(spec);

  const auto dir = detail::ensure_out_dir(opt.out_dir);
  GenOutcome out;
  out.features_path = dir / "features.semf";
  out.labels_path = dir / "labels.csv";
  out.count = features.size();
  out.dim = features.dim();
  write_features(out.features_path.string(), features);

  std::string csv = "sample,component\n";
  for (std::size_t m = 0; m < labels.size(); ++m)
    csv += std::to_string(m) + "," + std::to_string(labels[m]) + "\n";
  detail::write_file(out.labels_path.string(), csv);
  return out;
}

// -------------------------------------------------------------- train

struct TrainOptions {
  std::string features_path;
  std::string mixture_path;
  std::uint32_t k = 0;
  LossWeights weights;
  TrainConfig config;
  ChannelOptions channel;
  std::string out_dir;
};

struct TrainOutcome {
  Codebook codebook;
  TrainReport report;
  std::filesystem::path codebook_path;
};

inline TrainOutcome run_train(const TrainOptions& opt) {
  if (opt.k < 2) throw ValidationError("train requires --k of at least 2");
  opt.weights.validate();
  if (opt.weights.omega > 0.0 && !opt.channel.specified())
    throw ValidationError("omega > 0 needs a channel: give --p or --snr-db");

  const FeatureSet z = detail::load_feature_source(opt.features_path, opt.mixture_path);
  const ChannelSpec ch = opt.channel.build(opt.k, opt.config.seed);
  auto [codebook, report] = train_codebook(z, opt.k, opt.weights, ch, opt.config);

  const auto dir = detail::ensure_out_dir(opt.out_dir);
  const auto cb_path = dir / "codebook.semc";
  write_codebook(cb_path.string(), codebook);

  ConfigEcho echo;
  echo.add("command", "train");
  detail::echo_feature_source(echo, opt.features_path, opt.mixture_path);
  echo.add("k", opt.k);
  echo.add("gamma", opt.weights.gamma);
  echo.add("omega", opt.weights.omega);
  detail::echo_channel(echo, opt.channel);
  detail::echo_train_config(echo, opt.config, opt.k);

  std::string csv = echo.csv_header();
  csv += "epoch,quantization_loss,entropy_nats,channel_loss,total_loss,dead_resets\n";
  for (std::size_t e = 0; e < report.epochs.size(); ++e) {
    const EpochRecord& r = report.epochs[e];
    csv += std::to_string(e) + "," + fmt_double(r.quantization_loss) + "," +
           fmt_double(r.entropy_nats) + "," + fmt_double(r.channel_loss) + "," +
           fmt_double(r.total_loss) + "," + std::to_string(r.dead_resets) + "\n";
  }
  detail::write_file((dir / "train_report.csv").string(), csv);

  nlohmann::json j;
  j["config"] = echo.to_json();
  j["epochs"] = nlohmann::json::array();
  for (std::size_t e = 0; e < report.epochs.size(); ++e) {
    const EpochRecord& r = report.epochs[e];
    j["epochs"].push_back({{"epoch", e},
                           {"quantization_loss", r.quantization_loss},
                           {"entropy_nats", r.entropy_nats},
                           {"channel_loss", r.channel_loss},
                           {"total_loss", r.total_loss},
                           {"dead_resets", r.dead_resets}});
  }
  if (!report.epochs.empty()) {
    const EpochRecord& last = report.epochs.back();
    j["final"] = {{"quantization_loss", last.quantization_loss},
                  {"entropy_nats", last.entropy_nats},
                  {"entropy_bits", nats_to_bits(last.entropy_nats)},
                  {"channel_loss", last.channel_loss},
                  {"total_loss", last.total_loss}};
  }
  detail::write_json_file(dir / "train_report.json", j);

  return TrainOutcome{std::move(codebook), std::move(report), cb_path};
}

// ----------------------------------------------------------- simulate

struct SimulateOptions {
  std::string features_path;
  std::string mixture_path;
  std::string codebook_path;
  ChannelOptions channel;
  std::uint64_t trials = 1000;
  std::uint64_t seed = 1;
  std::string out_dir;
};

struct SimulateOutcome {
  LinkSimReport report;
};

inline SimulateOutcome run_simulate(const SimulateOptions& opt) {
  if (opt.codebook_path.empty()) throw ValidationError("simulate requires --codebook");
  if (!opt.channel.specified())
    throw ValidationError("simulate requires --p or --snr-db");

  const FeatureSet z = detail::load_feature_source(opt.features_path, opt.mixture_path);
  const Codebook cb = read_codebook(opt.codebook_path);
  const ChannelSpec ch = opt.channel.build(cb.size(), opt.seed);
  const LinkSimReport rep = simulate_link(z, cb, ch, opt.trials, opt.seed);

  const auto dir = detail::ensure_out_dir(opt.out_dir);

  ConfigEcho echo;
  echo.add("command", "simulate");
  detail::echo_feature_source(echo, opt.features_path, opt.mixture_path);
  echo.add("codebook", opt.codebook_path);
  detail::echo_channel(echo, opt.channel);
  echo.add("trials", opt.trials);
  echo.add("seed", opt.seed);

  std::string csv = echo.csv_header();
  csv +=
      "mse_mean,mse_stderr,index_error_rate,analytic_pe,d_quant,d_channel,d_total,"
      "entropy_nats,entropy_bits,trials,symbols_per_trial\n";
  csv += fmt_double(rep.mse_mean) + "," + fmt_double(rep.mse_stderr) + "," +
         fmt_double(rep.index_error_rate) + "," + fmt_double(rep.analytic_pe) + "," +
         fmt_double(rep.d_quant) + "," + fmt_double(rep.d_channel) + "," +
         fmt_double(rep.d_total) + "," + fmt_double(rep.entropy_nats) + "," +
         fmt_double(rep.entropy_bits) + "," + std::to_string(rep.trials) + "," +
         std::to_string(rep.symbols_per_trial) + "\n";
  detail::write_file((dir / "link_report.csv").string(), csv);

  nlohmann::json j;
  j["config"] = echo.to_json();
  j["report"] = {{"mse_mean", rep.mse_mean},
                 {"mse_stderr", rep.mse_stderr},
                 {"index_error_rate", rep.index_error_rate},
                 {"analytic_pe", rep.analytic_pe},
                 {"d_quant", rep.d_quant},
                 {"d_channel", rep.d_channel},
                 {"d_total", rep.d_total},
                 {"entropy_nats", rep.entropy_nats},
                 {"entropy_bits", rep.entropy_bits},
                 {"trials", rep.trials},
                 {"symbols_per_trial", rep.symbols_per_trial}};
  detail::write_json_file(dir / "link_report.json", j);

  return SimulateOutcome{rep};
}

// -------------------------------------------------------------- sweep

struct SweepOptions {
  std::string features_path;
  std::string mixture_path;
  std::vector<std::uint32_t> ks;
  double lambda = 0.0;
  std::vector<double> ps;
  LossWeights weights;
  TrainConfig config;
  ChannelOptions channel;
  std::string out_dir;
};

struct SweepOutcome {
  SweepResult result;
};

inline SweepOutcome run_sweep(const SweepOptions& opt) {
  if (!opt.channel.specified()) throw ValidationError("sweep requires --p or --snr-db");
  const double p = opt.channel.resolve_p();
  for (double gp : opt.ps) {
    if (!(gp >= 0.0 && gp <= 0.5))
      throw ValidationError("--ps entries must lie in [0, 0.5]");
  }

  const FeatureSet z = detail::load_feature_source(opt.features_path, opt.mixture_path);
  SweepResult result =
      optimal_codebook_size(z, opt.ks, p, opt.lambda, opt.weights, opt.config);

  const auto dir = detail::ensure_out_dir(opt.out_dir);

  ConfigEcho echo;
  echo.add("command", "sweep");
  detail::echo_feature_source(echo, opt.features_path, opt.mixture_path);
  {
    std::string ks_str;
    for (const SweepRow& row : result.rows)
      ks_str += (ks_str.empty() ? "" : ",") + std::to_string(row.k);
    echo.add("ks", ks_str);
  }
  echo.add("lambda", opt.lambda);
  detail::echo_channel(echo, opt.channel);
  echo.add("gamma", opt.weights.gamma);
  echo.add("omega", opt.weights.omega);
  detail::echo_train_config(echo, opt.config, 0u);

  std::string csv = "K,d_quant,d_channel,d_total,rate_real,rate_payload,objective\n";
  for (const SweepRow& row : result.rows) {
    csv += std::to_string(row.k) + "," + fmt_double(row.d_quant) + "," +
           fmt_double(row.d_channel) + "," + fmt_double(row.d_total) + "," +
           fmt_double(row.rate_real) + "," + fmt_double(row.rate_payload) + "," +
           fmt_double(row.objective) + "\n";
  }
  detail::write_file((dir / "sweep.csv").string(), csv);

  nlohmann::json j;
  j["config"] = echo.to_json();
  j["chosen_k"] = result.chosen_k;
  j["rows"] = nlohmann::json::array();
  for (const SweepRow& row : result.rows) {
    j["rows"].push_back({{"K", row.k},
                         {"d_quant", row.d_quant},
                         {"d_channel", row.d_channel},
                         {"d_total", row.d_total},
                         {"rate_real", row.rate_real},
                         {"rate_payload", row.rate_payload},
                         {"objective", row.objective}});
  }

  if (!opt.ps.empty()) {
    std::string grid = "K,p,d_quant,d_channel,d_total,rate_real,rate_payload,objective\n";
    nlohmann::json jgrid = nlohmann::json::array();
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
      const SweepRow& row = result.rows[i];
      const Codebook& cb = result.codebooks[i];
      const UsageStats stats = usage_frequencies(quantize_batch(z, cb), cb.size());
      for (double gp : opt.ps) {
        const double d_ch = channel_distortion(cb, stats, gp);
        const double d_total = row.d_quant + d_ch;
        const double objective = d_total + opt.lambda * row.rate_real;
        grid += std::to_string(row.k) + "," + fmt_double(gp) + "," +
                fmt_double(row.d_quant) + "," + fmt_double(d_ch) + "," +
                fmt_double(d_total) + "," + fmt_double(row.rate_real) + "," +
                fmt_double(row.rate_payload) + "," + fmt_double(objective) + "\n";
        jgrid.push_back({{"K", row.k},
                         {"p", gp},
                         {"d_quant", row.d_quant},
                         {"d_channel", d_ch},
                         {"d_total", d_total},
                         {"rate_real", row.rate_real},
                         {"rate_payload", row.rate_payload},
                         {"objective", objective}});
      }
    }
    detail::write_file((dir / "grid.csv").string(), grid);
    j["grid"] = std::move(jgrid);
  }

  detail::write_json_file(dir / "sweep.json", j);
  return SweepOutcome{std::move(result)};
}

// ------------------------------------------------------------ compare

struct CompareVariant {
  std::string name;
  LossWeights weights;
};

struct CompareOptions {
  std::string features_path;
  std::string mixture_path;
  std::uint32_t k = 0;
  std::vector<CompareVariant> variants;
  std::vector<double> ps;
  TrainConfig config;
  ChannelOptions channel;
  std::uint64_t trials = 1000;
  std::string out_dir;
};

struct CompareRow {
  std::string variant;
  double p = 0.0;
  double mse_mean = 0.0;
  double mse_stderr = 0.0;
  double entropy_nats = 0.0;
};

struct CompareOutcome {
  std::vector<CompareRow> rows;
  std::vector<Codebook> codebooks;
};

inline CompareOutcome run_compare(const CompareOptions& opt) {
  if (opt.variants.empty()) throw ValidationError("compare requires at least one variant");
  for (std::size_t i = 0; i < opt.variants.size(); ++i) {
    if (opt.variants[i].name.empty()) throw ValidationError("variant name must be nonempty");
    opt.variants[i].weights.validate();
    for (std::size_t l = 0; l < i; ++l) {
      if (opt.variants[l].name == opt.variants[i].name)
        throw ValidationError("duplicate variant name: " + opt.variants[i].name);
    }
  }
  if (opt.k < 2) throw ValidationError("compare requires --k of at least 2");

  std::vector<double> ps = opt.ps;
  if (ps.empty()) {
    if (!opt.channel.specified())
      throw ValidationError("compare requires --ps or a channel (--p / --snr-db)");
    ps.push_back(opt.channel.resolve_p());
  }
  for (double gp : ps) {
    if (!(gp >= 0.0 && gp <= 0.5))
      throw ValidationError("--ps entries must lie in [0, 0.5]");
  }

  bool any_omega = false;
  for (const CompareVariant& v : opt.variants) any_omega |= v.weights.omega > 0.0;
  if (any_omega && !opt.channel.specified())
    throw ValidationError("a variant has omega > 0: give --p or --snr-db for training");
  const double train_p = opt.channel.specified() ? opt.channel.resolve_p() : 0.0;

  const FeatureSet z = detail::load_feature_source(opt.features_path, opt.mixture_path);

  CompareOutcome out;
  for (const CompareVariant& v : opt.variants) {
    const ChannelSpec train_ch = opt.channel.build_at(opt.k, opt.config.seed, train_p);
    auto [cb, report] = train_codebook(z, opt.k, v.weights, train_ch, opt.config);
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
      const ChannelSpec sim_ch = opt.channel.build_at(opt.k, opt.config.seed, ps[pi]);
      const LinkSimReport rep = simulate_link(
          z, cb, sim_ch, opt.trials,
          CounterRng::derive_key(opt.config.seed, "compare-sim", pi));
      out.rows.push_back(
          CompareRow{v.name, ps[pi], rep.mse_mean, rep.mse_stderr, rep.entropy_nats});
    }
    out.codebooks.push_back(std::move(cb));
  }

  const auto dir = detail::ensure_out_dir(opt.out_dir);

  ConfigEcho echo;
  echo.add("command", "compare");
  detail::echo_feature_source(echo, opt.features_path, opt.mixture_path);
  echo.add("k", opt.k);
  {
    std::string vs;
    for (const CompareVariant& v : opt.variants) {
      vs += (vs.empty() ? "" : ",") + v.name + ":" + fmt_double(v.weights.gamma) + ":" +
            fmt_double(v.weights.omega);
    }
    echo.add("variants", vs);
  }
  {
    std::string ps_str;
    for (double gp : ps) ps_str += (ps_str.empty() ? "" : ",") + fmt_double(gp);
    echo.add("ps", ps_str);
  }
  if (opt.channel.specified()) detail::echo_channel(echo, opt.channel);
  echo.add("trials", opt.trials);
  detail::echo_train_config(echo, opt.config, opt.k);

  std::string csv = echo.csv_header();
  csv += "variant,p,mse_mean,mse_stderr,entropy_nats\n";
  for (const CompareRow& row : out.rows) {
    csv += row.variant + "," + fmt_double(row.p) + "," + fmt_double(row.mse_mean) + "," +
           fmt_double(row.mse_stderr) + "," + fmt_double(row.entropy_nats) + "\n";
  }
  detail::write_file((dir / "compare.csv").string(), csv);

  nlohmann::json j;
  j["config"] = echo.to_json();
  j["rows"] = nlohmann::json::array();
  for (const CompareRow& row : out.rows) {
    j["rows"].push_back({{"variant", row.variant},
                         {"p", row.p},
                         {"mse_mean", row.mse_mean},
                         {"mse_stderr", row.mse_stderr},
                         {"entropy_nats", row.entropy_nats}});
  }
  detail::write_json_file(dir / "compare.json", j);

  return out;
}

// ------------------------------------------------------------ analyze

struct AnalyzeOptions {
  std::string features_path;
  std::string mixture_path;
  std::string codebook_path;
  ChannelOptions channel;
  std::uint64_t seed = 1;
  bool write_confusion = false;
  std::string out_dir;
};

struct AnalyzeOutcome {
  DistortionReport distortion;
  double entropy_nats = 0.0;
  double d_channel_exact = 0.0;
};

inline AnalyzeOutcome run_analyze(const AnalyzeOptions& opt) {
  if (opt.codebook_path.empty()) throw ValidationError("analyze requires --codebook");
  if (!opt.channel.specified())
    throw ValidationError("analyze requires --p or --snr-db");

  const FeatureSet z = detail::load_feature_source(opt.features_path, opt.mixture_path);
  const Codebook cb = read_codebook(opt.codebook_path);
  const double p = opt.channel.resolve_p();
  const ChannelSpec ch = opt.channel.build(cb.size(), opt.seed);

  const IndexSequence idx = quantize_batch(z, cb);
  const UsageStats stats = usage_frequencies(idx, cb.size());
  const std::size_t bits = bits_per_index(cb.size());

  AnalyzeOutcome out;
  out.distortion.k = cb.size();
  out.distortion.p = p;
  out.distortion.d_quant = quantization_loss(z, cb);
  out.distortion.d_channel = channel_distortion(cb, stats, p);
  out.distortion.d_total = out.distortion.d_quant + out.distortion.d_channel;
  out.distortion.bit_rate = bit_rate(cb.size(), z.size());
  out.entropy_nats = empirical_entropy(stats);

  // Model-exact counterpart of the closed-form channel term, computed from
  // the full confusion matrix. Matches d_channel when confusion = uniform.
  const std::vector<double> conf = confusion_matrix(ch);
  for (std::uint32_t k = 0; k < cb.size(); ++k) {
    double jump = 0.0;
    for (std::uint32_t l = 0; l < cb.size(); ++l) {
      if (l == k) continue;
      jump += conf[std::size_t{k} * cb.size() + l] * squared_distance(cb.word(k), cb.word(l));
    }
    out.d_channel_exact += stats.frequencies[k] * jump;
  }

  const auto dir = detail::ensure_out_dir(opt.out_dir);

  ConfigEcho echo;
  echo.add("command", "analyze");
  detail::echo_feature_source(echo, opt.features_path, opt.mixture_path);
  echo.add("codebook", opt.codebook_path);
  detail::echo_channel(echo, opt.channel);
  echo.add("seed", opt.seed);

  const double pe = index_error_probability(bits, p);
  const double entropy_bits = nats_to_bits(out.entropy_nats);
  const double rate_real = bit_rate(cb.size(), z.size());
  const double rate_payload = payload_bit_rate(cb.size(), z.size());

  std::string csv = echo.csv_header();
  csv +=
      "k,dim,samples,bits_per_index,p,index_error_probability,d_quant,d_channel,d_total,"
      "d_channel_exact,entropy_nats,entropy_bits,rate_real,rate_payload\n";
  csv += std::to_string(cb.size()) + "," + std::to_string(cb.dim()) + "," +
         std::to_string(z.size()) + "," + std::to_string(bits) + "," + fmt_double(p) + "," +
         fmt_double(pe) + "," + fmt_double(out.distortion.d_quant) + "," +
         fmt_double(out.distortion.d_channel) + "," + fmt_double(out.distortion.d_total) +
         "," + fmt_double(out.d_channel_exact) + "," + fmt_double(out.entropy_nats) + "," +
         fmt_double(entropy_bits) + "," + fmt_double(rate_real) + "," +
         fmt_double(rate_payload) + "\n";
  detail::write_file((dir / "analyze.csv").string(), csv);

  std::string usage = "index,count,frequency,mean_pairwise_sq\n";
  for (std::uint32_t k = 0; k < cb.size(); ++k) {
    usage += std::to_string(k) + "," + std::to_string(stats.counts[k]) + "," +
             fmt_double(stats.frequencies[k]) + "," + fmt_double(mean_pairwise_sq(cb, k)) +
             "\n";
  }
  detail::write_file((dir / "usage.csv").string(), usage);

  if (opt.write_confusion) {
    std::string conf_csv;
    for (std::uint32_t k = 0; k < cb.size(); ++k) {
      for (std::uint32_t l = 0; l < cb.size(); ++l) {
        if (l) conf_csv += ",";
        conf_csv += fmt_double(conf[std::size_t{k} * cb.size() + l]);
      }
      conf_csv += "\n";
    }
    detail::write_file((dir / "confusion.csv").string(), conf_csv);
  }

  nlohmann::json j;
  j["config"] = echo.to_json();
  j["report"] = {{"k", cb.size()},
                 {"dim", cb.dim()},
                 {"samples", z.size()},
                 {"bits_per_index", bits},
                 {"p", p},
                 {"index_error_probability", pe},
                 {"d_quant", out.distortion.d_quant},
                 {"d_channel", out.distortion.d_channel},
                 {"d_total", out.distortion.d_total},
                 {"d_channel_exact", out.d_channel_exact},
                 {"entropy_nats", out.entropy_nats},
                 {"entropy_bits", entropy_bits},
                 {"rate_real", rate_real},
                 {"rate_payload", rate_payload}};
  j["usage"] = nlohmann::json::array();
  for (std::uint32_t k = 0; k < cb.size(); ++k) {
    j["usage"].push_back({{"index", k},
                          {"count", stats.counts[k]},
                          {"frequency", stats.frequencies[k]},
                          {"mean_pairwise_sq", mean_pairwise_sq(cb, k)}});
  }
  detail::write_json_file(dir / "analyze.json", j);

  return out;
}

}  // namespace semq
