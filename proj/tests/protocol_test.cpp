#include "sss_prnu/protocol.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "oracle.hpp"

namespace sss_prnu {
namespace {

using namespace std::chrono_literals;

struct Dataset {
  NoiseMatrix fingerprint;
  Image same_camera;
  Image other_camera;
};

Dataset make_dataset(std::size_t size, std::uint64_t seed) {
  SyntheticCamera cam(size, size, 0.02, 2.0, seed), other(size, size, 0.02, 2.0, seed + 1);
  std::vector<Image> imgs;
  for (int i = 0; i < 8; ++i) imgs.push_back(cam.capture());
  return Dataset{estimate_fingerprint(imgs), cam.capture(), other.capture()};
}

ProtocolConfig config(int l = 2, int n = 4, CenteringMode mode = CenteringMode::kPlaintext) {
  ProtocolConfig cfg;
  cfg.scheme = ShareScheme(PrimeField(), l, n);
  cfg.mode = mode;
  cfg.threshold = 0.05;
  cfg.timeout = 500ms;
  return cfg;
}

std::size_t stores_holding(LocalCluster& cluster, const std::string& id) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < cluster.size(); ++i) n += cluster.server(i).store().get(id).has_value();
  return n;
}

// Delays every call before forwarding.
class SlowChannel : public Channel {
 public:
  SlowChannel(std::shared_ptr<Channel> inner, std::chrono::milliseconds delay) : inner_(std::move(inner)), delay_(delay) {}
  using Channel::call;
  Bytes call(std::span<const std::uint8_t> request) override {
    std::this_thread::sleep_for(delay_);
    return inner_->call(request);
  }

 private:
  std::shared_ptr<Channel> inner_;
  std::chrono::milliseconds delay_;
};

class ProtocolTest : public ::testing::Test {
 protected:
  Dataset data = make_dataset(24, 500);
};

TEST_F(ProtocolTest, EnrollStoresExactShares) {
  const ProtocolConfig cfg = config();
  LocalCluster cluster(cfg);
  Rng rng = Rng::seeded(1);
  const EnrollReport rep = enroll(data.fingerprint, "cam", cfg, cluster.links(), rng);
  EXPECT_FALSE(rep.already_enrolled);
  EXPECT_EQ(rep.acknowledged, (std::vector<std::uint64_t>{1, 2, 3, 4}));

  Rng replay = Rng::seeded(1);
  const auto expected = prepare_vector(data.fingerprint, cfg.scaling, cfg.scheme, cfg.mode, replay);
  EXPECT_EQ(fetch_share("cam", 1, cfg, cluster.links()), expected[1].shares);
  EXPECT_THROW(fetch_share("nope", 1, cfg, cluster.links()), UnknownFingerprint);
}

TEST_F(ProtocolTest, EnrollWithServerDownRollsBack) {
  const ProtocolConfig cfg = config();
  LocalCluster cluster(cfg);
  Rng rng = Rng::seeded(2);
  for (std::uint64_t down = 1; down <= 4; ++down) {
    cluster.apply(FaultPlan{{down}, {}}, "cam");
    EXPECT_THROW(enroll(data.fingerprint, "cam", cfg, cluster.links(), rng), EnrollTimeout);
    cluster.all_up();
    EXPECT_EQ(stores_holding(cluster, "cam"), 0u) << "down=" << down;
  }
}

TEST_F(ProtocolTest, ReEnrollIsIdempotent) {
  const ProtocolConfig cfg = config();
  LocalCluster cluster(cfg);
  Rng first = Rng::seeded(3);
  enroll(data.fingerprint, "cam", cfg, cluster.links(), first);
  const ShareVector before = fetch_share("cam", 0, cfg, cluster.links());

  Rng same = Rng::seeded(3);
  EXPECT_TRUE(enroll(data.fingerprint, "cam", cfg, cluster.links(), same).already_enrolled);
  Rng fresh = Rng::seeded(4);
  EXPECT_TRUE(enroll(data.fingerprint, "cam", cfg, cluster.links(), fresh).already_enrolled);
  EXPECT_EQ(fetch_share("cam", 0, cfg, cluster.links()), before);

  NoiseMatrix changed = data.fingerprint;
  changed.values()[0] += 0.5;
  EXPECT_THROW(enroll(changed, "cam", cfg, cluster.links(), fresh), IdConflict);
  EXPECT_EQ(fetch_share("cam", 0, cfg, cluster.links()), before);
}

TEST_F(ProtocolTest, QueryMatchesQuantizedOracle) {
  for (auto mode : {CenteringMode::kPlaintext, CenteringMode::kEncrypted}) {
    ProtocolConfig cfg = config(2, 4, mode);
    // Raw residuals reach |x| ~ 10; server-side centering needs the smaller scale.
    const int digits = mode == CenteringMode::kEncrypted ? 2 : 4;
    cfg.scaling = Scaling(digits);
    LocalCluster cluster(cfg);
    Rng rng = Rng::seeded(5);
    enroll(data.fingerprint, "cam", cfg, cluster.links(), rng);
    for (const Image* img : {&data.same_camera, &data.other_camera}) {
      const NoiseMatrix residual = extract_residual(*img);
      const MatchResult got = query(*img, "cam", cfg, cluster.links(), rng);
      const auto want = oracle::quantized_pearson(data.fingerprint.values(), residual.values(), digits,
                                                  mode == CenteringMode::kEncrypted);
      EXPECT_EQ(got.r, want.rho) << to_string(mode);
      EXPECT_EQ(got.matched, want.rho >= cfg.threshold);
      EXPECT_EQ(got.server_subset.size(), 3u);
    }
    const MatchResult same = query(data.same_camera, "cam", cfg, cluster.links(), rng);
    const MatchResult other = query(data.other_camera, "cam", cfg, cluster.links(), rng);
    EXPECT_GT(same.r, other.r);
  }
}

TEST_F(ProtocolTest, QueryErrors) {
  const ProtocolConfig cfg = config();
  LocalCluster cluster(cfg);
  Rng rng = Rng::seeded(6);
  EXPECT_THROW(query(data.same_camera, "missing", cfg, cluster.links(), rng), UnknownFingerprint);
  EXPECT_THROW(query(data.same_camera, "bad/id", cfg, cluster.links(), rng), InvalidParams);
  ServerLinks short_links(cluster.links().begin(), cluster.links().begin() + 3);
  EXPECT_THROW(query(data.same_camera, "cam", cfg, short_links, rng), InvalidParams);
}

TEST_F(ProtocolTest, LivenessExhaustiveOverOutages) {
  const NoiseMatrix residual = extract_residual(data.same_camera);
  for (auto [l, n] : {std::pair{2, 3}, std::pair{2, 4}, std::pair{2, 5}, std::pair{3, 5}}) {
    const ProtocolConfig cfg = config(l, n);
    LocalCluster cluster(cfg);
    Rng rng = Rng::seeded(7);
    enroll(data.fingerprint, "cam", cfg, cluster.links(), rng);
    const MatchResult baseline = query_residual(residual, "cam", cfg, cluster.links(), rng);
    for (int mask = 0; mask < (1 << n); ++mask) {
      FaultPlan plan;
      for (int i = 0; i < n; ++i) {
        if (mask & (1 << i)) plan.downed_servers.insert(static_cast<std::uint64_t>(i + 1));
      }
      cluster.apply(plan, "cam");
      const int up = n - __builtin_popcount(mask);
      if (up >= cfg.quorum()) {
        const MatchResult r = query_residual(residual, "cam", cfg, cluster.links(), rng);
        EXPECT_TRUE(r.same_outcome(baseline)) << "l=" << l << " n=" << n << " mask=" << mask;
        for (std::uint64_t p : r.server_subset) EXPECT_FALSE(plan.downed_servers.count(p));
      } else {
        EXPECT_THROW(query_residual(residual, "cam", cfg, cluster.links(), rng), QuorumNotReached)
            << "l=" << l << " n=" << n << " mask=" << mask;
      }
    }
  }
}

TEST_F(ProtocolTest, FirstQuorumWinsAndStragglersAreIgnored) {
  const ProtocolConfig cfg = config();
  LocalCluster cluster(cfg);
  Rng rng = Rng::seeded(8);
  enroll(data.fingerprint, "cam", cfg, cluster.links(), rng);
  ServerLinks links = cluster.links();
  links[0] = std::make_shared<SlowChannel>(links[0], 300ms);
  const auto start = std::chrono::steady_clock::now();
  const MatchResult r = query(data.same_camera, "cam", cfg, links, rng);
  EXPECT_LT(std::chrono::steady_clock::now() - start, 250ms);
  EXPECT_EQ(r.server_subset, (std::vector<std::uint64_t>{2, 3, 4}));
  const MatchResult all = query(data.same_camera, "cam", cfg, links, rng, Collection::kAll);
  EXPECT_TRUE(all.same_outcome(r));
}

TEST_F(ProtocolTest, HungServerCountsAsDown) {
  ProtocolConfig cfg = config();
  cfg.timeout = 100ms;
  LocalCluster cluster(cfg);
  Rng rng = Rng::seeded(9);
  enroll(data.fingerprint, "cam", cfg, cluster.links(), rng);
  ServerLinks links = cluster.links();
  links[1] = std::make_shared<SlowChannel>(links[1], 1500ms);
  cluster.apply(FaultPlan{{4}, {}}, "cam");
  EXPECT_THROW(query(data.same_camera, "cam", cfg, links, rng), QuorumNotReached);
}

TEST_F(ProtocolTest, VerifyConsistencyClean) {
  const ProtocolConfig cfg = config();
  LocalCluster cluster(cfg);
  Rng rng = Rng::seeded(10);
  enroll(data.fingerprint, "cam", cfg, cluster.links(), rng);
  const ConsistencyReport rep = verify_consistency(data.same_camera, "cam", cfg, cluster.links(), rng);
  EXPECT_TRUE(rep.consistent);
  EXPECT_EQ(rep.subsets.size(), 4u);
  for (const auto& s : rep.subsets) {
    EXPECT_TRUE(s.agrees);
    EXPECT_TRUE(s.stable);
  }
  EXPECT_TRUE(rep.suspects.empty());
  ASSERT_TRUE(rep.reference.has_value());
  EXPECT_EQ(rep.reference->r, query(data.same_camera, "cam", cfg, cluster.links(), rng).r);
}

TEST_F(ProtocolTest, VerifyConsistencyFindsTamperedServer) {
  const ProtocolConfig cfg = config();
  Rng rng = Rng::seeded(11);
  for (std::uint64_t bad = 1; bad <= 4; ++bad) {
    LocalCluster cluster(cfg);
    enroll(data.fingerprint, "cam", cfg, cluster.links(), rng);
    cluster.apply(FaultPlan{{}, {{bad, TamperRule{17, FieldElement{123456789}}}}}, "cam");
    const ConsistencyReport rep = verify_consistency(data.same_camera, "cam", cfg, cluster.links(), rng);
    EXPECT_FALSE(rep.consistent);
    EXPECT_EQ(rep.suspects, std::vector<std::uint64_t>{bad});
    ASSERT_EQ(rep.implicating.at(bad).size(), 3u);
    for (std::size_t s : rep.implicating.at(bad)) {
      const auto& pts = rep.subsets[s].points;
      EXPECT_NE(std::find(pts.begin(), pts.end(), bad), pts.end());
      EXPECT_FALSE(rep.subsets[s].agrees);
      EXPECT_FALSE(rep.subsets[s].stable);
    }
  }
}

TEST_F(ProtocolTest, VerifyNotApplicableAtMinimalN) {
  const ProtocolConfig cfg = config(2, 3);
  LocalCluster cluster(cfg);
  Rng rng = Rng::seeded(12);
  enroll(data.fingerprint, "cam", cfg, cluster.links(), rng);
  EXPECT_THROW(verify_consistency(data.same_camera, "cam", cfg, cluster.links(), rng), NotApplicable);
}

TEST_F(ProtocolTest, FaultPlanValidation) {
  const ProtocolConfig cfg = config();
  LocalCluster cluster(cfg);
  EXPECT_THROW((FaultPlan{{2}, {{2, TamperRule{}}}}.validate()), InvalidParams);
  EXPECT_THROW((FaultPlan{{}, {{2, TamperRule{0, FieldElement{0}}}}}.validate()), InvalidParams);
  EXPECT_THROW(cluster.apply(FaultPlan{{}, {{9, TamperRule{}}}}, "cam"), InvalidParams);
}

TEST_F(ProtocolTest, ServersOnlySeeTheirOwnShares) {
  const ProtocolConfig cfg = config();
  LocalCluster cluster(cfg);
  Rng rng = Rng::seeded(13);
  enroll(data.fingerprint, "cam", cfg, cluster.links(), rng);
  query(data.same_camera, "cam", cfg, cluster.links(), rng, Collection::kAll);
  verify_consistency(data.other_camera, "cam", cfg, cluster.links(), rng);
  for (std::size_t i = 0; i < cluster.size(); ++i) {
    EXPECT_FALSE(cluster.trace(i).entries().empty());
    const auto problems = inspect_server_traffic(cluster.trace(i), cfg.scheme.points()[i], cfg.scheme);
    EXPECT_TRUE(problems.empty()) << problems.front();
  }
}

TEST_F(ProtocolTest, SeededRunsProduceIdenticalTraffic) {
  const ProtocolConfig cfg = config();
  auto run = [&] {
    LocalCluster cluster(cfg);
    Rng rng = Rng::seeded(14);
    enroll(data.fingerprint, "cam", cfg, cluster.links(), rng);
    query(data.same_camera, "cam", cfg, cluster.links(), rng, Collection::kAll);
    std::vector<Bytes> traces;
    for (std::size_t i = 0; i < cluster.size(); ++i) traces.push_back(cluster.trace(i).flatten());
    return traces;
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace sss_prnu
