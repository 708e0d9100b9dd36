#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "semq/semq.hpp"

#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;

  TempDir() {
    static std::atomic<unsigned> counter{0};
    const auto stamp =
        std::chrono::steady_clock::now().time_since_epoch().count();
    path = fs::temp_directory_path() /
           ("semq_io_test_" + std::to_string(stamp) + "_" +
            std::to_string(counter.fetch_add(1)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str(const std::string& name = {}) const {
    return name.empty() ? path.string() : (path / name).string();
  }
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out << text;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

// first line that is not part of the leading '#' echo block
std::string header_line(const std::string& csv) {
  for (const std::string& line : lines_of(csv)) {
    if (!line.empty() && line[0] != '#') return line;
  }
  return {};
}

std::string simple_mixture_text() {
  return "# synthetic two-pile source\n"
         "dim = 2\n"
         "count = 300\n"
         "seed = 7\n"
         "component = 0.5 | -10 0 | 0.5 0.5\n"
         "component = 0.5 | 10 0 | 0.5 0.5\n";
}

// values exactly representable in single precision survive the f32 files
std::vector<double> quarter_grid(std::size_t n, int offset = 0) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = (double(int(i)) + double(offset)) * 0.25 - 3.0;
  return out;
}

}  // namespace

TEST_CASE("doubles are printed in shortest round-trip form") {
  REQUIRE(semq::fmt_double(0.1) == "0.1");
  REQUIRE(semq::fmt_double(2.0) == "2");
  REQUIRE(semq::fmt_double(-0.5) == "-0.5");
  REQUIRE(semq::fmt_double(0.0) == "0");

  for (double x : {1.0 / 3.0, 0.56953279, 1e300, -2.2250738585072014e-308, 12345.678}) {
    const std::string s = semq::fmt_double(x);
    REQUIRE(std::strtod(s.c_str(), nullptr) == x);
  }
}

TEST_CASE("feature files survive a write/read round trip") {
  TempDir dir;
  const semq::FeatureSet z(3, quarter_grid(27));
  const std::string path = dir.str("z.semf");
  semq::write_features(path, z);

  const semq::FeatureSet back = semq::read_features(path);
  REQUIRE(back.size() == z.size());
  REQUIRE(back.dim() == z.dim());
  REQUIRE(semq_test::same_values(back.data(), z.data()));

  // a second write of identical content is byte-identical
  const std::string again = dir.str("z2.semf");
  semq::write_features(again, z);
  REQUIRE(read_text(path) == read_text(again));
}

TEST_CASE("codebook files survive a write/read round trip") {
  TempDir dir;
  const semq::Codebook cb(4, quarter_grid(16, 3));
  const std::string path = dir.str("cb.semc");
  semq::write_codebook(path, cb);

  const semq::Codebook back = semq::read_codebook(path);
  REQUIRE(back.size() == cb.size());
  REQUIRE(back.dim() == cb.dim());
  REQUIRE(semq_test::same_values(back.data(), cb.data()));
}

TEST_CASE("malformed binary files are rejected as I/O errors") {
  TempDir dir;
  const semq::FeatureSet z(2, quarter_grid(8));
  const std::string good = dir.str("good.semf");
  semq::write_features(good, z);
  const std::string bytes = read_text(good);

  const std::string missing = dir.str("nope.semf");
  REQUIRE_THROWS_AS(semq::read_features(missing), semq::IoError);

  const std::string magic = dir.str("magic.semf");
  std::string bad = bytes;
  bad[0] = 'X';
  write_text(magic, bad);
  REQUIRE_THROWS_AS(semq::read_features(magic), semq::IoError);

  const std::string version = dir.str("version.semf");
  bad = bytes;
  bad[4] = 9;
  write_text(version, bad);
  REQUIRE_THROWS_AS(semq::read_features(version), semq::IoError);

  const std::string truncated = dir.str("trunc.semf");
  write_text(truncated, bytes.substr(0, bytes.size() - 1));
  REQUIRE_THROWS_AS(semq::read_features(truncated), semq::IoError);

  const std::string trailing = dir.str("trail.semf");
  write_text(trailing, bytes + "Z");
  REQUIRE_THROWS_AS(semq::read_features(trailing), semq::IoError);

  // zero-row header
  std::string empty;
  empty += "SEMF";
  semq::detail::put_u16(empty, semq::kFileFormatVersion);
  semq::detail::put_u32(empty, 0);
  semq::detail::put_u32(empty, 2);
  const std::string zero = dir.str("zero.semf");
  write_text(zero, empty);
  REQUIRE_THROWS_AS(semq::read_features(zero), semq::IoError);

  // a codebook must hold at least two words
  std::string tiny;
  tiny += "SEMC";
  semq::detail::put_u16(tiny, semq::kFileFormatVersion);
  semq::detail::put_u32(tiny, 1);
  semq::detail::put_u32(tiny, 2);
  semq::detail::put_f32(tiny, 1.0f);
  semq::detail::put_f32(tiny, 2.0f);
  const std::string one = dir.str("one.semc");
  write_text(one, tiny);
  REQUIRE_THROWS_AS(semq::read_codebook(one), semq::IoError);

  // feature magic on a codebook read
  REQUIRE_THROWS_AS(semq::read_codebook(good), semq::IoError);
}

TEST_CASE("config text parses keys, comments, and repeats") {
  TempDir dir;
  const std::string path = dir.str("a.cfg");
  write_text(path,
             "# leading comment\n"
             "  k = 8   # trailing comment\n"
             "\n"
             "gamma = 0.25\n"
             "tag = first\n"
             "tag = second\n"
             "spaced   =   keeps inner spacing  \n");

  const semq::ConfigFile cfg = semq::parse_config(path);
  REQUIRE(cfg.entries.size() == 5);
  REQUIRE(cfg.has("k"));
  REQUIRE_FALSE(cfg.has("missing"));
  REQUIRE(cfg.get("k") == "8");
  REQUIRE(cfg.get("gamma") == "0.25");
  REQUIRE(cfg.get("missing", "fallback") == "fallback");
  REQUIRE(cfg.get("tag") == "first");
  REQUIRE((cfg.get_all("tag") == std::vector<std::string>{"first", "second"}));
  REQUIRE(cfg.get("spaced") == "keeps inner spacing");

  const std::string broken = dir.str("b.cfg");
  write_text(broken, "just a bare line\n");
  REQUIRE_THROWS_AS(semq::parse_config(broken), semq::ValidationError);

  REQUIRE_THROWS_AS(semq::parse_config(dir.str("missing.cfg")), semq::IoError);
}

TEST_CASE("mixture spec files define a full generator") {
  TempDir dir;
  const std::string path = dir.str("mix.cfg");
  write_text(path, simple_mixture_text());

  const semq::MixtureSpec spec = semq::parse_mixture_spec(path);
  REQUIRE(spec.dim == 2);
  REQUIRE(spec.count == 300);
  REQUIRE(spec.seed == 7);
  REQUIRE(spec.components.size() == 2);
  REQUIRE(spec.components[0].weight == 0.5);
  REQUIRE((spec.components[0].mean == std::vector<double>{-10.0, 0.0}));
  REQUIRE((spec.components[1].variance == std::vector<double>{0.5, 0.5}));

  const std::string two_parts = dir.str("bad1.cfg");
  write_text(two_parts, "dim = 1\ncount = 5\ncomponent = 1.0 | 0\n");
  REQUIRE_THROWS_AS(semq::parse_mixture_spec(two_parts), semq::ValidationError);

  const std::string bad_sum = dir.str("bad2.cfg");
  write_text(bad_sum,
             "dim = 1\ncount = 5\n"
             "component = 0.6 | 0 | 1\ncomponent = 0.6 | 2 | 1\n");
  REQUIRE_THROWS_AS(semq::parse_mixture_spec(bad_sum), semq::ValidationError);

  const std::string no_dim = dir.str("bad3.cfg");
  write_text(no_dim, "count = 5\ncomponent = 1.0 | 0 | 1\n");
  REQUIRE_THROWS_AS(semq::parse_mixture_spec(no_dim), semq::ValidationError);

  const std::string bad_dim = dir.str("bad4.cfg");
  write_text(bad_dim, "dim = 2\ncount = 5\ncomponent = 1.0 | 0 | 1\n");
  REQUIRE_THROWS_AS(semq::parse_mixture_spec(bad_dim), semq::ValidationError);
}

TEST_CASE("mixture sampling honors weights, means, and the seed") {
  semq::MixtureSpec spec;
  spec.dim = 2;
  spec.count = 300;
  spec.seed = 7;
  semq::MixtureComponent a;
  a.weight = 0.5;
  a.mean = {-10.0, 0.0};
  a.variance = {0.5, 0.5};
  semq::MixtureComponent b = a;
  b.mean = {10.0, 0.0};
  spec.components = {a, b};

  const auto [z, labels] = semq::generate_mixture_labeled(spec);
  REQUIRE(z.size() == 300);
  REQUIRE(z.dim() == 2);
  REQUIRE(labels.size() == 300);

  // labels agree with proximity for well-separated components
  std::size_t ones = 0;
  for (std::size_t m = 0; m < z.size(); ++m) {
    const auto row = z.row(m);
    const semq::Index nearest = row[0] < 0.0 ? 0 : 1;
    REQUIRE(labels[m] == nearest);
    ones += labels[m];
  }
  // 3 sigma around the 50/50 split
  const double freq = double(ones) / 300.0;
  REQUIRE(std::abs(freq - 0.5) < 3.0 * std::sqrt(0.25 / 300.0));

  // identical seeds reproduce bits; a new seed does not
  const semq::FeatureSet z2 = semq::generate_mixture(spec);
  REQUIRE(semq_test::same_values(z2.data(), z.data()));
  spec.seed = 8;
  REQUIRE_FALSE(semq_test::same_values(semq::generate_mixture(spec).data(), z.data()));

  // zero variance collapses every draw onto the mean
  spec.components[0].variance = {0.0, 0.0};
  spec.components[1].variance = {0.0, 0.0};
  const auto [zc, lc] = semq::generate_mixture_labeled(spec);
  for (std::size_t m = 0; m < zc.size(); ++m) {
    const auto row = zc.row(m);
    REQUIRE(row[0] == spec.components[lc[m]].mean[0]);
    REQUIRE(row[1] == spec.components[lc[m]].mean[1]);
  }
}

TEST_CASE("gen writes a feature file and a label sidecar") {
  TempDir dir;
  const std::string mix = dir.str("mix.cfg");
  write_text(mix, simple_mixture_text());

  semq::GenOptions opt;
  opt.mixture_path = mix;
  opt.out_dir = dir.str("out");
  const semq::GenOutcome out = semq::run_gen(opt);
  REQUIRE(out.count == 300);
  REQUIRE(out.dim == 2);

  const semq::FeatureSet z = semq::read_features(out.features_path.string());
  REQUIRE(z.size() == 300);
  REQUIRE(z.dim() == 2);

  const auto label_lines = lines_of(read_text(out.labels_path.string()));
  REQUIRE(label_lines.size() == 301);
  REQUIRE(label_lines[0] == "sample,component");
  REQUIRE(label_lines[1].substr(0, 2) == "0,");

  // the seed override rewrites the sample set
  semq::GenOptions other = opt;
  other.out_dir = dir.str("out2");
  other.seed_override = 99;
  const semq::GenOutcome out2 = semq::run_gen(other);
  REQUIRE(read_text(out.features_path.string()) !=
          read_text(out2.features_path.string()));

  semq::GenOptions empty;
  empty.out_dir = dir.str("out3");
  REQUIRE_THROWS_AS(semq::run_gen(empty), semq::ValidationError);
}

TEST_CASE("train writes a reloadable codebook and a per-epoch report") {
  TempDir dir;
  const std::string mix = dir.str("mix.cfg");
  write_text(mix, simple_mixture_text());

  semq::TrainOptions opt;
  opt.mixture_path = mix;
  opt.k = 4;
  opt.weights = {0.1, 0.0};
  opt.config.epochs = 12;
  opt.config.seed = 3;
  opt.out_dir = dir.str("run1");
  const semq::TrainOutcome out = semq::run_train(opt);

  REQUIRE(out.codebook.size() == 4);
  REQUIRE(out.report.epochs.size() == 12);

  // the stored codebook is the trained one after the f32 narrowing
  const semq::Codebook back = semq::read_codebook(out.codebook_path.string());
  REQUIRE(back.size() == out.codebook.size());
  for (std::size_t i = 0; i < back.data().size(); ++i)
    REQUIRE(back.data()[i] == double(float(out.codebook.data()[i])));

  const std::string csv = read_text((fs::path(opt.out_dir) / "train_report.csv").string());
  REQUIRE(header_line(csv) ==
          "epoch,quantization_loss,entropy_nats,channel_loss,total_loss,dead_resets");

  const auto j = nlohmann::json::parse(
      read_text((fs::path(opt.out_dir) / "train_report.json").string()));
  REQUIRE(j.at("epochs").size() == 12);
  REQUIRE(j.at("final").at("total_loss").get<double>() ==
          out.report.epochs.back().total_loss);
  REQUIRE(j.at("config").at("k").get<std::string>() == "4");

  // a rerun with the same inputs reproduces every output byte
  semq::TrainOptions rerun = opt;
  rerun.out_dir = dir.str("run2");
  semq::run_train(rerun);
  for (const char* name : {"codebook.semc", "train_report.csv", "train_report.json"}) {
    REQUIRE(read_text((fs::path(opt.out_dir) / name).string()) ==
            read_text((fs::path(rerun.out_dir) / name).string()));
  }
}

TEST_CASE("train validates its option combinations") {
  TempDir dir;
  const std::string mix = dir.str("mix.cfg");
  write_text(mix, simple_mixture_text());

  semq::TrainOptions opt;
  opt.mixture_path = mix;
  opt.k = 4;
  opt.weights = {0.0, 0.0};
  opt.out_dir = dir.str("out");

  semq::TrainOptions bad = opt;
  bad.k = 1;
  REQUIRE_THROWS_AS(semq::run_train(bad), semq::ValidationError);

  // omega > 0 without any channel description
  bad = opt;
  bad.weights = {0.0, 0.2};
  REQUIRE_THROWS_AS(semq::run_train(bad), semq::ValidationError);

  // exactly one feature source
  bad = opt;
  bad.features_path = dir.str("also.semf");
  REQUIRE_THROWS_AS(semq::run_train(bad), semq::ValidationError);
  bad = opt;
  bad.mixture_path.clear();
  REQUIRE_THROWS_AS(semq::run_train(bad), semq::ValidationError);

  // --p and --snr-db are mutually exclusive
  bad = opt;
  bad.weights = {0.0, 0.2};
  bad.channel.p = 0.1;
  bad.channel.snr_db = 10.0;
  REQUIRE_THROWS_AS(semq::run_train(bad), semq::ValidationError);
}

TEST_CASE("a silent channel makes the simulated link exactly deterministic") {
  TempDir dir;
  const semq::FeatureSet z(2, quarter_grid(40));
  const std::string zpath = dir.str("z.semf");
  semq::write_features(zpath, z);

  semq::TrainOptions topt;
  topt.features_path = zpath;
  topt.k = 4;
  topt.weights = {0.0, 0.0};
  topt.config.epochs = 10;
  topt.config.update = semq::UpdateRule::lloyd;
  topt.out_dir = dir.str("train");
  const semq::TrainOutcome trained = semq::run_train(topt);

  semq::SimulateOptions sopt;
  sopt.features_path = zpath;
  sopt.codebook_path = trained.codebook_path.string();
  sopt.channel.p = 0.0;
  sopt.trials = 50;
  sopt.seed = 11;
  sopt.out_dir = dir.str("sim0");
  const semq::SimulateOutcome out = semq::run_simulate(sopt);

  const semq::Codebook cb = semq::read_codebook(sopt.codebook_path);
  // every trial sees the same clean link; only summation rounding remains
  REQUIRE(out.report.mse_mean ==
          Catch::Approx(semq::quantization_loss(z, cb)).epsilon(1e-13));
  REQUIRE(out.report.mse_stderr < 1e-7);
  REQUIRE(out.report.index_error_rate == 0.0);
  REQUIRE(out.report.analytic_pe == 0.0);
  REQUIRE(out.report.d_channel == 0.0);
  REQUIRE(out.report.trials == 50);
  REQUIRE(out.report.symbols_per_trial == z.size());

  const std::string csv = read_text((fs::path(sopt.out_dir) / "link_report.csv").string());
  REQUIRE(header_line(csv) ==
          "mse_mean,mse_stderr,index_error_rate,analytic_pe,d_quant,d_channel,d_total,"
          "entropy_nats,entropy_bits,trials,symbols_per_trial");

  const auto j = nlohmann::json::parse(
      read_text((fs::path(sopt.out_dir) / "link_report.json").string()));
  REQUIRE(j.at("report").at("mse_mean").get<double>() == out.report.mse_mean);

  // a noisy channel's empirical error rate tracks the analytic value
  semq::SimulateOptions noisy = sopt;
  noisy.channel.p = 0.1;
  noisy.trials = 200;
  noisy.out_dir = dir.str("sim1");
  const semq::SimulateOutcome nout = semq::run_simulate(noisy);
  const double pe = nout.report.analytic_pe;
  const double draws = 200.0 * double(z.size());
  REQUIRE(std::abs(nout.report.index_error_rate - pe) <
          4.0 * std::sqrt(pe * (1.0 - pe) / draws));
  REQUIRE(nout.report.mse_mean > out.report.mse_mean);

  // missing codebook path is a validation error, not an I/O error
  semq::SimulateOptions nocb = sopt;
  nocb.codebook_path.clear();
  REQUIRE_THROWS_AS(semq::run_simulate(nocb), semq::ValidationError);

  // no channel at all
  semq::SimulateOptions noch = sopt;
  noch.channel.p.reset();
  REQUIRE_THROWS_AS(semq::run_simulate(noch), semq::ValidationError);
}

TEST_CASE("sweep writes the size-selection table and the p grid") {
  TempDir dir;
  const std::string mix = dir.str("mix.cfg");
  write_text(mix, simple_mixture_text());

  semq::SweepOptions opt;
  opt.mixture_path = mix;
  opt.ks = {2, 4, 8};
  opt.lambda = 0.001;
  opt.ps = {0.0, 0.05, 0.1};
  opt.channel.p = 0.05;
  opt.config.epochs = 10;
  opt.config.update = semq::UpdateRule::lloyd;
  opt.config.seed = 4;
  opt.out_dir = dir.str("out");
  const semq::SweepOutcome out = semq::run_sweep(opt);
  REQUIRE(out.result.rows.size() == 3);

  const std::string csv = read_text((fs::path(opt.out_dir) / "sweep.csv").string());
  const auto csv_lines = lines_of(csv);
  REQUIRE(csv_lines.size() == 4);
  REQUIRE(csv_lines[0] == "K,d_quant,d_channel,d_total,rate_real,rate_payload,objective");
  REQUIRE(csv_lines[1].substr(0, 2) == "2,");
  REQUIRE(csv_lines[2].substr(0, 2) == "4,");
  REQUIRE(csv_lines[3].substr(0, 2) == "8,");

  const std::string grid = read_text((fs::path(opt.out_dir) / "grid.csv").string());
  const auto grid_lines = lines_of(grid);
  REQUIRE(grid_lines.size() == 1 + 3 * 3);
  REQUIRE(grid_lines[0] == "K,p,d_quant,d_channel,d_total,rate_real,rate_payload,objective");

  const auto j = nlohmann::json::parse(
      read_text((fs::path(opt.out_dir) / "sweep.json").string()));
  REQUIRE(j.at("chosen_k").get<std::uint32_t>() == out.result.chosen_k);
  REQUIRE(j.at("rows").size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(j.at("rows")[i].at("d_total").get<double>() == out.result.rows[i].d_total);
    REQUIRE(j.at("rows")[i].at("objective").get<double>() == out.result.rows[i].objective);
  }
  REQUIRE(j.at("grid").size() == 9);

  // channel description is mandatory
  semq::SweepOptions noch = opt;
  noch.channel.p.reset();
  noch.out_dir = dir.str("out2");
  REQUIRE_THROWS_AS(semq::run_sweep(noch), semq::ValidationError);

  // out-of-range grid points are rejected up front
  semq::SweepOptions badp = opt;
  badp.ps = {0.1, 0.9};
  badp.out_dir = dir.str("out3");
  REQUIRE_THROWS_AS(semq::run_sweep(badp), semq::ValidationError);
}

TEST_CASE("compare trains every variant and scores it across the p list") {
  TempDir dir;
  const std::string mix = dir.str("mix.cfg");
  write_text(mix, simple_mixture_text());

  semq::CompareOptions opt;
  opt.mixture_path = mix;
  opt.k = 4;
  opt.variants = {{"plain", {0.0, 0.0}}, {"entropic", {0.2, 0.0}}};
  opt.ps = {0.0, 0.1};
  opt.config.epochs = 8;
  opt.config.seed = 5;
  opt.trials = 100;
  opt.out_dir = dir.str("out");
  const semq::CompareOutcome out = semq::run_compare(opt);

  REQUIRE(out.rows.size() == 4);
  REQUIRE(out.codebooks.size() == 2);
  REQUIRE(out.rows[0].variant == "plain");
  REQUIRE(out.rows[0].p == 0.0);
  REQUIRE(out.rows[1].variant == "plain");
  REQUIRE(out.rows[1].p == 0.1);
  REQUIRE(out.rows[2].variant == "entropic");
  // more noise never lowers the simulated error on the same codebook
  REQUIRE(out.rows[1].mse_mean >= out.rows[0].mse_mean);

  const std::string csv = read_text((fs::path(opt.out_dir) / "compare.csv").string());
  REQUIRE(header_line(csv) == "variant,p,mse_mean,mse_stderr,entropy_nats");
  std::size_t data_lines = 0;
  bool seen_header = false;
  for (const std::string& line : lines_of(csv)) {
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      seen_header = true;
      continue;
    }
    ++data_lines;
  }
  REQUIRE(data_lines == 4);

  const auto j = nlohmann::json::parse(
      read_text((fs::path(opt.out_dir) / "compare.json").string()));
  REQUIRE(j.at("rows").size() == 4);
  REQUIRE(j.at("rows")[3].at("variant").get<std::string>() == "entropic");
  REQUIRE(j.at("rows")[3].at("mse_mean").get<double>() == out.rows[3].mse_mean);

  semq::CompareOptions bad = opt;
  bad.variants.clear();
  bad.out_dir = dir.str("out2");
  REQUIRE_THROWS_AS(semq::run_compare(bad), semq::ValidationError);

  bad = opt;
  bad.variants = {{"same", {0.0, 0.0}}, {"same", {0.1, 0.0}}};
  bad.out_dir = dir.str("out3");
  REQUIRE_THROWS_AS(semq::run_compare(bad), semq::ValidationError);

  // no ps and no channel leaves nothing to evaluate at
  bad = opt;
  bad.ps.clear();
  bad.out_dir = dir.str("out4");
  REQUIRE_THROWS_AS(semq::run_compare(bad), semq::ValidationError);
}

TEST_CASE("analyze reports the distortion split and usage table") {
  TempDir dir;
  const std::string mix = dir.str("mix.cfg");
  write_text(mix, simple_mixture_text());

  semq::TrainOptions topt;
  topt.mixture_path = mix;
  topt.k = 4;
  topt.weights = {0.0, 0.0};
  topt.config.epochs = 10;
  topt.config.update = semq::UpdateRule::lloyd;
  topt.out_dir = dir.str("train");
  const semq::TrainOutcome trained = semq::run_train(topt);

  semq::AnalyzeOptions opt;
  opt.mixture_path = mix;
  opt.codebook_path = trained.codebook_path.string();
  opt.channel.p = 0.1;
  opt.write_confusion = true;
  opt.out_dir = dir.str("out");
  const semq::AnalyzeOutcome out = semq::run_analyze(opt);

  REQUIRE(out.distortion.d_total ==
          Catch::Approx(out.distortion.d_quant + out.distortion.d_channel).epsilon(1e-14));
  // uniform confusion: the closed form and the matrix walk agree
  REQUIRE(out.d_channel_exact == Catch::Approx(out.distortion.d_channel).epsilon(1e-12));
  REQUIRE(out.entropy_nats >= 0.0);

  const std::string csv = read_text((fs::path(opt.out_dir) / "analyze.csv").string());
  REQUIRE(header_line(csv) ==
          "k,dim,samples,bits_per_index,p,index_error_probability,d_quant,d_channel,"
          "d_total,d_channel_exact,entropy_nats,entropy_bits,rate_real,rate_payload");

  const std::string usage = read_text((fs::path(opt.out_dir) / "usage.csv").string());
  const auto usage_lines = lines_of(usage);
  REQUIRE(usage_lines.size() == 5);
  REQUIRE(usage_lines[0] == "index,count,frequency,mean_pairwise_sq");

  // K x K matrix rows, each row summing to one
  const std::string conf = read_text((fs::path(opt.out_dir) / "confusion.csv").string());
  const auto conf_lines = lines_of(conf);
  REQUIRE(conf_lines.size() == 4);
  for (const std::string& line : conf_lines) {
    double sum = 0.0;
    for (const std::string& cell : semq::detail::split(line, ','))
      sum += std::strtod(cell.c_str(), nullptr);
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
  }

  const auto j = nlohmann::json::parse(
      read_text((fs::path(opt.out_dir) / "analyze.json").string()));
  REQUIRE(j.at("report").at("d_channel_exact").get<double>() == out.d_channel_exact);
  REQUIRE(j.at("usage").size() == 4);

  // confusion sidecar only appears on request
  semq::AnalyzeOptions quiet = opt;
  quiet.write_confusion = false;
  quiet.out_dir = dir.str("out2");
  semq::run_analyze(quiet);
  REQUIRE_FALSE(fs::exists(fs::path(quiet.out_dir) / "confusion.csv"));

  semq::AnalyzeOptions nocb = opt;
  nocb.codebook_path.clear();
  nocb.out_dir = dir.str("out3");
  REQUIRE_THROWS_AS(semq::run_analyze(nocb), semq::ValidationError);
}
