#include "cli_app.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>

namespace sss_prnu::cli {
namespace {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

struct Run {
  int code = -1;
  std::string out, err;

  std::string value(const std::string& key) const {
    std::istringstream in(out);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
    }
    return {};
  }
  std::string last_line() const {
    std::istringstream in(out);
    std::string line, last;
    while (std::getline(in, line)) last = line;
    return last;
  }
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run(std::move(args), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::map<std::string, Bytes> snapshot(const fs::path& dir) {
  std::map<std::string, Bytes> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return files;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ::unsetenv("SSS_PRNU_SEED");
    dir = fs::temp_directory_path() / ("sss_prnu_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override {
    ::unsetenv("SSS_PRNU_SEED");
    fs::remove_all(dir);
  }
  fs::path dir;
};

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(cli({}).code, kUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kUsage);
  EXPECT_EQ(cli({"match-local", "--fingerprint", "a", "--image", "b"}).code, kUsage);
  EXPECT_EQ(cli({"synth", "--size", "0", "--out", (dir / "s").string()}).code, kUsage);
  EXPECT_EQ(cli({"query", "--image", "x", "--id", "a", "--threshold", "0.1", "--servers", "h:1", "--centering", "middle"}).code,
            kUsage);
  EXPECT_EQ(cli({"--version"}).code, kOk);
}

TEST_F(CliTest, SynthIsDeterministic) {
  const auto a = cli({"synth", "--cameras", "2", "--images", "3", "--size", "16", "--seed", "9", "--out", (dir / "a").string()});
  const auto b = cli({"synth", "--cameras", "2", "--images", "3", "--size", "16", "--seed", "9", "--out", (dir / "b").string()});
  ASSERT_EQ(a.code, kOk) << a.err;
  ASSERT_EQ(b.code, kOk);
  const auto sa = snapshot(dir / "a");
  EXPECT_EQ(sa.size(), 2u * (3 + 2));
  EXPECT_EQ(sa, snapshot(dir / "b"));
  EXPECT_TRUE(fs::exists(dir / "a" / "cam01" / "enroll" / "img002.pgm"));
}

TEST_F(CliTest, EnvironmentSeedOverridesFlag) {
  ::setenv("SSS_PRNU_SEED", "5", 1);
  const auto r = cli({"synth", "--cameras", "1", "--images", "1", "--size", "8", "--seed", "9", "--out", (dir / "e").string()});
  EXPECT_EQ(r.value("seed"), "5");
  ::setenv("SSS_PRNU_SEED", "abc", 1);
  EXPECT_EQ(cli({"synth", "--cameras", "1", "--images", "1", "--size", "8", "--out", (dir / "f").string()}).code, kUsage);
}

TEST_F(CliTest, FingerprintOfOneImageIsItsResidual) {
  SyntheticCamera cam(12, 10, 0.02, 2.0, 3);
  fs::create_directories(dir / "one");
  write_pgm(dir / "one" / "x.pgm", cam.capture());
  const auto r = cli({"fingerprint", "--images", (dir / "one").string(), "--out", (dir / "fp.nmat").string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(r.value("images"), "1");
  EXPECT_EQ(read_nmat(dir / "fp.nmat"), extract_residual(read_image(dir / "one" / "x.pgm")));

  fs::create_directories(dir / "empty");
  EXPECT_EQ(cli({"fingerprint", "--images", (dir / "empty").string(), "--out", (dir / "e.nmat").string()}).code, kUsage);
  EXPECT_EQ(cli({"fingerprint", "--images", (dir / "missing").string(), "--out", (dir / "e.nmat").string()}).code, kUsage);
}

TEST_F(CliTest, SameCameraBeatsCrossCameraLocally) {
  ASSERT_EQ(cli({"synth", "--cameras", "2", "--images", "20", "--size", "48", "--seed", "4", "--out", (dir / "d").string()}).code,
            kOk);
  for (int c = 0; c < 2; ++c) {
    const std::string cam = "cam0" + std::to_string(c);
    ASSERT_EQ(cli({"fingerprint", "--images", (dir / "d" / cam / "enroll").string(), "--out",
                   (dir / (cam + ".nmat")).string()}).code,
              kOk);
  }
  auto r_of = [&](const std::string& fp, const std::string& img) {
    const auto r = cli({"match-local", "--fingerprint", (dir / (fp + ".nmat")).string(), "--image",
                        (dir / "d" / img / "query.pgm").string(), "--threshold", "0.05"});
    EXPECT_TRUE(r.code == kMatch || r.code == kNoMatch);
    EXPECT_EQ(r.last_line(), r.code == kMatch ? "MATCH" : "NO-MATCH");
    EXPECT_EQ(r.value("r").size(), std::string("0.0000").size() + (r.value("r")[0] == '-'));
    return std::stod(r.value("r_exact"));
  };
  const double same0 = r_of("cam00", "cam00"), same1 = r_of("cam01", "cam01");
  const double cross0 = r_of("cam00", "cam01"), cross1 = r_of("cam01", "cam00");
  EXPECT_GT(std::min(same0, same1), std::max(cross0, cross1));
}

class CliNetworkTest : public CliTest {
 protected:
  void SetUp() override {
    CliTest::SetUp();
    const ShareScheme scheme(PrimeField(), 2, 4);
    std::string list;
    for (FieldElement p : scheme.points()) {
      auto cloud = std::make_shared<CloudServer>(scheme, p, CenteringMode::kPlaintext);
      clouds.push_back(cloud);
      servers.push_back(std::make_unique<TcpServer>(cloud, Endpoint{"127.0.0.1", 0}));
      list += (list.empty() ? "" : ",") + servers.back()->endpoint().str();
    }
    endpoints = list;
    ASSERT_EQ(cli({"synth", "--cameras", "2", "--images", "10", "--size", "32", "--seed", "2", "--out", (dir / "d").string()}).code,
              kOk);
    ASSERT_EQ(cli({"fingerprint", "--images", (dir / "d" / "cam00" / "enroll").string(), "--out",
                   (dir / "fp.nmat").string()}).code,
              kOk);
  }

  std::vector<std::string> net(std::vector<std::string> args) {
    args.insert(args.end(), {"--servers", endpoints, "--timeout-ms", "1000", "--seed", "77"});
    return args;
  }

  std::vector<std::shared_ptr<CloudServer>> clouds;
  std::vector<std::unique_ptr<TcpServer>> servers;
  std::string endpoints;
};

TEST_F(CliNetworkTest, EnrollQueryVerify) {
  const auto e = cli(net({"enroll", "--fingerprint", (dir / "fp.nmat").string(), "--id", "cam00"}));
  ASSERT_EQ(e.code, kOk) << e.err;
  EXPECT_EQ(e.value("quorum"), "3");
  EXPECT_EQ(e.value("seed"), "77");
  EXPECT_EQ(e.last_line(), "ENROLLED");
  EXPECT_EQ(cli(net({"enroll", "--fingerprint", (dir / "fp.nmat").string(), "--id", "cam00"})).value("already_enrolled"),
            "true");

  const std::string same = (dir / "d" / "cam00" / "query.pgm").string();
  const auto q = cli(net({"query", "--image", same, "--id", "cam00", "--threshold", "0.05"}));
  ASSERT_TRUE(q.code == kMatch || q.code == kNoMatch) << q.err;
  const auto local = cli({"match-local", "--fingerprint", (dir / "fp.nmat").string(), "--image", same, "--threshold", "0.05"});
  EXPECT_NEAR(std::stod(q.value("r_exact")), std::stod(local.value("r_exact")), 1e-3);
  EXPECT_EQ(q.code, local.code);
  // First quorum to answer; which three depends on arrival order.
  EXPECT_EQ(detail::split(q.value("servers_used"), ',').size(), 3u);

  const auto v = cli(net({"verify", "--image", same, "--id", "cam00"}));
  EXPECT_EQ(v.code, kOk) << v.err;
  EXPECT_EQ(v.last_line(), "CONSISTENT");

  clouds[2]->store().tamper("cam00", 5, FieldElement{99991});
  const auto t = cli(net({"verify", "--image", same, "--id", "cam00"}));
  EXPECT_EQ(t.code, kProtocol);
  EXPECT_EQ(t.value("suspects"), "3");
  EXPECT_EQ(t.last_line(), "INCONSISTENT");
}

TEST_F(CliNetworkTest, ProtocolErrorsExitThree) {
  const std::string img = (dir / "d" / "cam01" / "query.pgm").string();
  EXPECT_EQ(cli(net({"query", "--image", img, "--id", "nobody", "--threshold", "0.1"})).code, kProtocol);
  ASSERT_EQ(cli(net({"enroll", "--fingerprint", (dir / "fp.nmat").string(), "--id", "cam00"})).code, kOk);
  servers[0]->stop();
  EXPECT_NE(cli(net({"query", "--image", img, "--id", "cam00", "--threshold", "0.1"})).code, kProtocol);
  servers[1]->stop();
  const auto r = cli(net({"query", "--image", img, "--id", "cam00", "--threshold", "0.1"}));
  EXPECT_EQ(r.code, kProtocol);
  EXPECT_NE(r.err.find("QuorumNotReached"), std::string::npos);
  EXPECT_EQ(cli(net({"enroll", "--fingerprint", (dir / "fp.nmat").string(), "--id", "other"})).code, kProtocol);
}

TEST_F(CliNetworkTest, ServerListMustMatchN) {
  const std::string img = (dir / "d" / "cam00" / "query.pgm").string();
  const auto r = cli({"query", "--image", img, "--id", "a", "--threshold", "0.1", "--servers", "127.0.0.1:1"});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("--servers lists 1"), std::string::npos) << r.err;
}

}  // namespace
}  // namespace sss_prnu::cli
