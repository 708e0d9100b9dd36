#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "semq/semq.hpp"

#include "test_util.hpp"

namespace {

semq::ChannelSpec clean_channel(semq::Index k) {
  return semq::ChannelSpec(0.0, semq::ConfusionModel::uniform_approx,
                           semq::BitLabeling::natural(k));
}

semq::MixtureSpec two_piles(double separation, double variance, std::size_t count,
                            std::uint64_t seed) {
  semq::MixtureSpec spec;
  spec.dim = 2;
  spec.count = count;
  spec.seed = seed;
  semq::MixtureComponent left;
  left.weight = 0.5;
  left.mean = {-separation / 2.0, 0.0};
  left.variance = {variance, variance};
  semq::MixtureComponent right = left;
  right.mean = {separation / 2.0, 0.0};
  spec.components = {left, right};
  return spec;
}

bool same_report(const semq::TrainReport& a, const semq::TrainReport& b) {
  if (a.epochs.size() != b.epochs.size()) return false;
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    const auto& x = a.epochs[e];
    const auto& y = b.epochs[e];
    if (x.quantization_loss != y.quantization_loss) return false;
    if (x.entropy_nats != y.entropy_nats) return false;
    if (x.channel_loss != y.channel_loss) return false;
    if (x.total_loss != y.total_loss) return false;
    if (x.dead_resets != y.dead_resets) return false;
  }
  return true;
}

bool is_data_row(const semq::FeatureSet& z, std::span<const double> word) {
  for (std::size_t m = 0; m < z.size(); ++m) {
    const auto row = z.row(m);
    if (std::equal(row.begin(), row.end(), word.begin(), word.end())) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("training rejects degenerate sizes and configs") {
  const semq::FeatureSet z(1, {0.0, 1.0, 2.0, 3.0});
  const semq::LossWeights w{0.0, 0.0};
  semq::TrainConfig cfg;
  cfg.epochs = 2;

  REQUIRE_THROWS_AS(semq::train_codebook(z, 1, w, clean_channel(2), cfg),
                    semq::ValidationError);
  REQUIRE_THROWS_AS(semq::train_codebook(z, 5, w, clean_channel(5), cfg),
                    semq::ValidationError);

  semq::TrainConfig bad = cfg;
  bad.epochs = 0;
  REQUIRE_THROWS_AS(bad.validate(), semq::ValidationError);
  bad = cfg;
  bad.step_size = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), semq::ValidationError);
  bad = cfg;
  bad.step_size = -0.1;
  REQUIRE_THROWS_AS(bad.validate(), semq::ValidationError);
  bad = cfg;
  bad.temperature = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), semq::ValidationError);
  bad = cfg;
  bad.dead_threshold = 1.0;
  REQUIRE_THROWS_AS(bad.validate(), semq::ValidationError);
  bad = cfg;
  bad.dead_threshold = -0.5;
  REQUIRE_THROWS_AS(bad.validate(), semq::ValidationError);
  bad = cfg;
  bad.dead_threshold = 0.0;
  REQUIRE_NOTHROW(bad.validate());
}

TEST_CASE("init schemes seed codewords from distinct data rows") {
  semq::CounterRng data_rng(semq::CounterRng::derive_key(31, "init-data"));
  std::vector<double> data(60 * 3);
  for (double& x : data) x = data_rng.uniform(-5.0, 5.0);
  const semq::FeatureSet z(3, std::move(data));
  const semq::Index k = 8;

  semq::CounterRng rng1(semq::CounterRng::derive_key(31, "kmeanspp"));
  const std::vector<double> pp = semq::detail::kmeans_pp_init(z, k, rng1);
  semq::CounterRng rng2(semq::CounterRng::derive_key(31, "sample"));
  const std::vector<double> rs = semq::detail::random_sample_init(z, k, rng2);

  REQUIRE(pp.size() == std::size_t{k} * 3);
  REQUIRE(rs.size() == std::size_t{k} * 3);

  std::set<std::vector<double>> pp_words;
  std::set<std::vector<double>> rs_words;
  for (semq::Index c = 0; c < k; ++c) {
    const std::span<const double> pw(pp.data() + std::size_t{c} * 3, 3);
    const std::span<const double> rw(rs.data() + std::size_t{c} * 3, 3);
    REQUIRE(is_data_row(z, pw));
    REQUIRE(is_data_row(z, rw));
    pp_words.insert(std::vector<double>(pw.begin(), pw.end()));
    rs_words.insert(std::vector<double>(rw.begin(), rw.end()));
  }
  // random-sample draws without replacement; kmeans++ never revisits a
  // zero-distance row, so both sets stay distinct on distinct data
  REQUIRE(pp_words.size() == k);
  REQUIRE(rs_words.size() == k);
}

TEST_CASE("centroid updates never increase the quantization loss") {
  for (std::uint64_t seed : {1ULL, 7ULL, 42ULL}) {
    semq::MixtureSpec spec = two_piles(6.0, 1.5, 300, seed);
    // add overlap so convergence takes several epochs
    const semq::FeatureSet z = semq::generate_mixture(spec);
    semq::TrainConfig cfg;
    cfg.epochs = 40;
    cfg.update = semq::UpdateRule::lloyd;
    cfg.init = semq::InitScheme::random_sample;
    cfg.seed = seed + 100;
    const auto [cb, report] = semq::train_codebook(z, 4, {0.0, 0.0}, clean_channel(4), cfg);
    REQUIRE(report.epochs.size() == 40);
    for (std::size_t e = 1; e < report.epochs.size(); ++e) {
      REQUIRE(report.epochs[e].quantization_loss <=
              report.epochs[e - 1].quantization_loss + 1e-12);
    }
    REQUIRE(cb.size() == 4);
    REQUIRE(cb.dim() == 2);
  }
}

TEST_CASE("each epoch record composes its total from the recorded parts") {
  const semq::FeatureSet z = semq::generate_mixture(two_piles(4.0, 1.0, 200, 9));
  semq::TrainConfig cfg;
  cfg.epochs = 15;
  cfg.seed = 2;
  const semq::LossWeights w{0.2, 0.3};
  const semq::ChannelSpec ch(0.1, semq::ConfusionModel::uniform_approx,
                             semq::BitLabeling::natural(4));
  const auto [cb, report] = semq::train_codebook(z, 4, w, ch, cfg);
  REQUIRE(report.epochs.size() == 15);
  for (const semq::EpochRecord& rec : report.epochs) {
    REQUIRE(rec.quantization_loss >= 0.0);
    REQUIRE(rec.entropy_nats >= 0.0);
    REQUIRE(rec.channel_loss >= 0.0);
    const double total = rec.quantization_loss + w.omega * rec.channel_loss -
                         w.gamma * rec.entropy_nats;
    REQUIRE(rec.total_loss == Catch::Approx(total).margin(1e-12));
  }

  // with omega disabled the channel column is pinned to zero
  const auto [cb0, report0] = semq::train_codebook(z, 4, {0.2, 0.0}, ch, cfg);
  for (const semq::EpochRecord& rec : report0.epochs) REQUIRE(rec.channel_loss == 0.0);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  const semq::FeatureSet z = semq::generate_mixture(two_piles(5.0, 1.0, 150, 21));
  semq::TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 77;
  cfg.batch_size = 32;
  const semq::LossWeights w{0.1, 0.1};
  const semq::ChannelSpec ch(0.05, semq::ConfusionModel::uniform_approx,
                             semq::BitLabeling::natural(4));

  const auto [cb_a, rep_a] = semq::train_codebook(z, 4, w, ch, cfg);
  const auto [cb_b, rep_b] = semq::train_codebook(z, 4, w, ch, cfg);
  REQUIRE(semq_test::same_values(cb_a.data(), cb_b.data()));
  REQUIRE(same_report(rep_a, rep_b));

  semq::TrainConfig other = cfg;
  other.seed = 78;
  other.init = semq::InitScheme::random_sample;
  const auto [cb_c, rep_c] = semq::train_codebook(z, 4, w, ch, other);
  REQUIRE_FALSE(semq_test::same_values(cb_a.data(), cb_c.data()));
}

TEST_CASE("a two-cluster mixture is recovered almost perfectly") {
  semq::MixtureSpec spec = two_piles(10.0, 0.5, 400, 3);
  const auto [z, labels] = semq::generate_mixture_labeled(spec);
  semq::TrainConfig cfg;
  cfg.epochs = 30;
  cfg.update = semq::UpdateRule::lloyd;
  cfg.seed = 4;
  const auto [cb, report] = semq::train_codebook(z, 2, {0.0, 0.0}, clean_channel(2), cfg);
  const semq::IndexSequence s = semq::quantize_batch(z, cb);

  std::size_t direct = 0;
  std::size_t swapped = 0;
  for (std::size_t m = 0; m < z.size(); ++m) {
    if (s[m] == labels[m]) ++direct;
    if (s[m] == 1 - labels[m]) ++swapped;
  }
  const std::size_t best = std::max(direct, swapped);
  REQUIRE(double(best) >= 0.95 * double(z.size()));
}

TEST_CASE("the entropy regularizer balances usage on skewed data") {
  // one heavy pile and one light pile in 1-D, close enough that the soft
  // assignment sees both words from most points
  semq::MixtureSpec spec;
  spec.dim = 1;
  spec.count = 500;
  spec.seed = 15;
  semq::MixtureComponent heavy;
  heavy.weight = 0.85;
  heavy.mean = {0.0};
  heavy.variance = {0.25};
  semq::MixtureComponent light;
  light.weight = 0.15;
  light.mean = {2.5};
  light.variance = {0.25};
  spec.components = {heavy, light};
  const semq::FeatureSet z = semq::generate_mixture(spec);

  semq::TrainConfig cfg;
  cfg.epochs = 120;
  cfg.step_size = 0.05;
  cfg.temperature = 1.5;
  cfg.seed = 5;
  cfg.update = semq::UpdateRule::sgd;
  cfg.dead_threshold = 0.0;  // keep resets out of the paired comparison

  const auto [cb_plain, rep_plain] =
      semq::train_codebook(z, 2, {0.0, 0.0}, clean_channel(2), cfg);
  const auto [cb_reg, rep_reg] =
      semq::train_codebook(z, 2, {1.0, 0.0}, clean_channel(2), cfg);

  const double ent_plain = rep_plain.epochs.back().entropy_nats;
  const double ent_reg = rep_reg.epochs.back().entropy_nats;
  REQUIRE(ent_reg > ent_plain + 0.01);

  // the record matches a recount on the final codebook
  const semq::UsageStats stats =
      semq::usage_frequencies(semq::quantize_batch(z, cb_reg), cb_reg.size());
  REQUIRE(semq::empirical_entropy(stats) == Catch::Approx(ent_reg).margin(1e-12));
}

TEST_CASE("the channel term pulls codewords together under a noisy channel") {
  semq::MixtureSpec spec;
  spec.dim = 2;
  spec.count = 400;
  spec.seed = 18;
  for (int c = 0; c < 4; ++c) {
    semq::MixtureComponent comp;
    comp.weight = 0.25;
    comp.mean = {double(c % 2) * 8.0, double(c / 2) * 8.0};
    comp.variance = {0.4, 0.4};
    spec.components.push_back(comp);
  }
  const semq::FeatureSet z = semq::generate_mixture(spec);

  semq::TrainConfig cfg;
  cfg.epochs = 100;
  cfg.step_size = 0.05;
  cfg.seed = 6;
  const semq::ChannelSpec noisy(0.1, semq::ConfusionModel::uniform_approx,
                                semq::BitLabeling::natural(4));

  const auto [cb_plain, rep_plain] = semq::train_codebook(z, 4, {0.0, 0.0}, noisy, cfg);
  const auto [cb_aware, rep_aware] = semq::train_codebook(z, 4, {0.0, 0.3}, noisy, cfg);

  const auto d_ch = [&](const semq::Codebook& cb) {
    const semq::UsageStats stats =
        semq::usage_frequencies(semq::quantize_batch(z, cb), cb.size());
    return semq::channel_distortion(cb, stats, 0.1);
  };
  REQUIRE(d_ch(cb_aware) < d_ch(cb_plain));
}

TEST_CASE("starved codewords are re-seeded in gradient mode") {
  const semq::FeatureSet z = semq::generate_mixture(two_piles(6.0, 0.5, 100, 8));
  semq::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 10;
  cfg.dead_threshold = 0.9;  // no codeword can hold 90% of a two-pile split
  const auto [cb, report] = semq::train_codebook(z, 2, {0.0, 0.0}, clean_channel(2), cfg);
  REQUIRE(report.epochs[0].dead_resets >= 1);

  semq::TrainConfig calm = cfg;
  calm.dead_threshold = 0.0;
  const auto [cb2, report2] = semq::train_codebook(z, 2, {0.0, 0.0}, clean_channel(2), calm);
  for (const semq::EpochRecord& rec : report2.epochs) REQUIRE(rec.dead_resets == 0);
}

TEST_CASE("centroid mode only re-seeds codewords with zero usage") {
  // nine points in one pile, one far outlier: usage 0.9 / 0.1 stays put even
  // with a high threshold because centroid mode ignores the fraction test
  std::vector<double> data{0.0, 0.1, -0.1, 0.05, -0.05, 0.02, -0.02, 0.08, -0.08, 10.0};
  const semq::FeatureSet z(1, std::move(data));
  semq::TrainConfig cfg;
  cfg.epochs = 10;
  cfg.update = semq::UpdateRule::lloyd;
  cfg.dead_threshold = 0.5;
  cfg.seed = 12;
  const auto [cb, report] = semq::train_codebook(z, 2, {0.0, 0.0}, clean_channel(2), cfg);
  const semq::UsageStats stats =
      semq::usage_frequencies(semq::quantize_batch(z, cb), cb.size());
  REQUIRE(stats.frequencies[0] > 0.0);
  REQUIRE(stats.frequencies[1] > 0.0);
  for (const semq::EpochRecord& rec : report.epochs) REQUIRE(rec.dead_resets == 0);
}

TEST_CASE("mini-batch descent still reduces the loss on easy data") {
  const semq::FeatureSet z = semq::generate_mixture(two_piles(8.0, 0.5, 256, 30));
  semq::TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 64;
  cfg.step_size = 0.05;
  cfg.seed = 31;
  const auto [cb, report] = semq::train_codebook(z, 2, {0.0, 0.0}, clean_channel(2), cfg);
  REQUIRE(report.epochs.back().quantization_loss <=
          report.epochs.front().quantization_loss + 1e-12);
  REQUIRE(report.epochs.back().quantization_loss < 2.0);
}
