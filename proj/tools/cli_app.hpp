#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sss_prnu/sss_prnu.hpp"

namespace sss_prnu::cli {

enum ExitCode : int { kMatch = 0, kOk = 0, kNoMatch = 1, kUsage = 2, kProtocol = 3 };

inline std::atomic<bool> g_stop{false};

struct CommonFlags {
  std::uint64_t prime = kMersenne61;
  int digits = 4;
  int l = 2;
  int n = 4;
  std::string centering = "plaintext";
  std::optional<std::uint64_t> seed;
  int timeout_ms = 2000;
  std::string servers;
  double sigma = 1.0;
  int radius = 2;
};

namespace detail {

inline std::string fmt_double(double v, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

inline std::string fmt_exact(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void add_field_flags(CLI::App& cmd, CommonFlags& f) {
  cmd.add_option("--prime", f.prime, "Prime modulus p (< 2^63)")->capture_default_str();
  cmd.add_option("--d", f.digits, "Decimal digits kept when encoding")->capture_default_str()->check(CLI::Range(1, 9));
  cmd.add_option("--l", f.l, "Fresh-share threshold l")->capture_default_str();
  cmd.add_option("--n", f.n, "Number of cloud servers n")->capture_default_str();
  cmd.add_option("--centering", f.centering, "Where the mean is removed")
      ->capture_default_str()
      ->check(CLI::IsMember({"plaintext", "encrypted"}));
}

inline void add_denoiser_flags(CLI::App& cmd, CommonFlags& f) {
  cmd.add_option("--sigma", f.sigma, "Gaussian denoiser sigma")->capture_default_str();
  cmd.add_option("--radius", f.radius, "Gaussian denoiser radius")->capture_default_str();
}

inline void add_network_flags(CLI::App& cmd, CommonFlags& f) {
  cmd.add_option("--servers", f.servers, "host:port[,host:port...] in point order")->required();
  cmd.add_option("--timeout-ms", f.timeout_ms, "Per-request timeout")->capture_default_str();
  cmd.add_option("--seed", f.seed, "RNG seed for reproducible runs (env SSS_PRNU_SEED overrides)");
}

inline std::optional<std::uint64_t> effective_seed(const CommonFlags& f) {
  if (const char* env = std::getenv("SSS_PRNU_SEED"); env != nullptr && *env != '\0') {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw InvalidParams("SSS_PRNU_SEED is not an unsigned integer");
    }
  }
  return f.seed;
}

inline Rng make_rng(const CommonFlags& f, std::uint64_t stream) {
  const auto seed = effective_seed(f);
  return seed ? Rng::seeded(*seed, stream) : Rng::system();
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  return parts;
}

inline ProtocolConfig make_config(const CommonFlags& f, double threshold) {
  ProtocolConfig cfg{ShareScheme(PrimeField(f.prime), f.l, f.n), Scaling(f.digits),
                     f.centering == "encrypted" ? CenteringMode::kEncrypted : CenteringMode::kPlaintext, threshold,
                     GaussianDenoiser{f.sigma, f.radius}, std::chrono::milliseconds(f.timeout_ms)};
  return cfg;
}

inline ServerLinks make_links(const CommonFlags& f, const ProtocolConfig& cfg) {
  const auto addrs = split(f.servers, ',');
  if (addrs.size() != static_cast<std::size_t>(cfg.scheme.n())) {
    throw InvalidParams("--servers lists " + std::to_string(addrs.size()) + " endpoints but n = " +
                        std::to_string(cfg.scheme.n()));
  }
  ServerLinks links;
  for (const auto& a : addrs) links.push_back(std::make_shared<TcpChannel>(Endpoint::parse(a), cfg.timeout));
  return links;
}

inline void echo_config(std::ostream& out, const CommonFlags& f, const ProtocolConfig& cfg) {
  out << "prime=" << cfg.scheme.field().modulus() << "\n"
      << "d=" << cfg.scaling.digits() << "\n"
      << "l=" << cfg.scheme.l() << "\n"
      << "n=" << cfg.scheme.n() << "\n"
      << "quorum=" << cfg.quorum() << "\n"
      << "centering=" << to_string(cfg.mode) << "\n"
      << "denoiser=gaussian(sigma=" << f.sigma << ",radius=" << f.radius << ")\n";
  const auto seed = effective_seed(f);
  out << "seed=" << (seed ? std::to_string(*seed) : std::string("system")) << "\n";
  if (!f.servers.empty()) out << "servers=" << f.servers << "\n" << "timeout_ms=" << f.timeout_ms << "\n";
}

inline void print_result(std::ostream& out, const MatchResult& r) {
  out << "P=" << fmt_exact(r.p_val) << "\n"
      << "Q=" << fmt_exact(r.q_val) << "\n"
      << "R=" << fmt_exact(r.r_val) << "\n"
      << "r_exact=" << fmt_exact(r.r) << "\n"
      << "r=" << fmt_double(r.r, 4) << "\n"
      << "threshold=" << fmt_exact(r.threshold) << "\n";
  if (!r.server_subset.empty()) {
    out << "servers_used=";
    for (std::size_t i = 0; i < r.server_subset.size(); ++i) out << (i ? "," : "") << r.server_subset[i];
    out << "\n";
  }
  out << (r.matched ? "MATCH" : "NO-MATCH") << "\n";
}

inline std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InvalidParams(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline std::string two_digits(std::size_t v, int width) {
  std::ostringstream os;
  os << std::setw(width) << std::setfill('0') << v;
  return os.str();
}

// ---- subcommands ----------------------------------------------------------

inline int cmd_fingerprint(const std::string& images_dir, const std::string& out_path, const CommonFlags& f,
                           std::ostream& out) {
  const auto files = list_images(images_dir);
  if (files.empty()) throw EmptySet("no .pgm/.ppm images in " + images_dir);
  std::vector<Image> imgs;
  for (const auto& p : files) imgs.push_back(read_image(p));
  const NoiseMatrix fp = estimate_fingerprint(imgs, GaussianDenoiser{f.sigma, f.radius});
  write_nmat(out_path, fp);
  out << "denoiser=gaussian(sigma=" << f.sigma << ",radius=" << f.radius << ")\n"
      << "images=" << files.size() << "\n"
      << "width=" << fp.width() << "\n"
      << "height=" << fp.height() << "\n"
      << "out=" << out_path << "\n";
  return kOk;
}

inline int cmd_synth(int cameras, int images, int size, double pattern_std, double shot_noise,
                     const CommonFlags& f, const std::string& out_dir, std::ostream& out) {
  if (cameras <= 0 || images <= 0 || size <= 0) throw InvalidParams("cameras, images and size must be positive");
  const std::uint64_t seed = effective_seed(f).value_or(1);
  std::filesystem::create_directories(out_dir);
  for (int c = 0; c < cameras; ++c) {
    SyntheticCamera cam(static_cast<std::size_t>(size), static_cast<std::size_t>(size), pattern_std, shot_noise,
                        seed * 1000003ULL + static_cast<std::uint64_t>(c));
    const auto cam_dir = std::filesystem::path(out_dir) / ("cam" + two_digits(static_cast<std::size_t>(c), 2));
    std::filesystem::create_directories(cam_dir / "enroll");
    write_nmat(cam_dir / "pattern.nmat", cam.prnu_pattern());
    for (int i = 0; i < images; ++i) {
      write_pgm(cam_dir / "enroll" / ("img" + two_digits(static_cast<std::size_t>(i), 3) + ".pgm"), cam.capture());
    }
    write_pgm(cam_dir / "query.pgm", cam.capture());
  }
  out << "cameras=" << cameras << "\n"
      << "images=" << images << "\n"
      << "size=" << size << "\n"
      << "pattern_std=" << pattern_std << "\n"
      << "shot_noise=" << shot_noise << "\n"
      << "seed=" << seed << "\n"
      << "out=" << out_dir << "\n";
  return kOk;
}

inline int cmd_enroll(const std::string& fingerprint_path, const std::string& id, const CommonFlags& f,
                      std::ostream& out) {
  const ProtocolConfig cfg = make_config(f, 0.0);
  echo_config(out, f, cfg);
  const NoiseMatrix fp = read_nmat(fingerprint_path);
  Rng rng = make_rng(f, 10);
  const ServerLinks links = make_links(f, cfg);
  const EnrollReport report = enroll(fp, id, cfg, links, rng);
  out << "id=" << id << "\n"
      << "elements=" << fp.size() << "\n"
      << "already_enrolled=" << (report.already_enrolled ? "true" : "false") << "\n"
      << "acknowledged=" << ::sss_prnu::detail::join_points(report.acknowledged) << "\n"
      << "ENROLLED\n";
  return kOk;
}

inline int cmd_query(const std::string& image_path, const std::string& id, double threshold, const CommonFlags& f,
                     std::ostream& out) {
  const ProtocolConfig cfg = make_config(f, threshold);
  echo_config(out, f, cfg);
  const Image img = read_image(image_path);
  Rng rng = make_rng(f, 20);
  const ServerLinks links = make_links(f, cfg);
  out << "id=" << id << "\n";
  const MatchResult result = query(img, id, cfg, links, rng);
  print_result(out, result);
  return result.matched ? kMatch : kNoMatch;
}

inline int cmd_verify(const std::string& image_path, const std::string& id, double threshold, const CommonFlags& f,
                      std::ostream& out) {
  const ProtocolConfig cfg = make_config(f, threshold);
  echo_config(out, f, cfg);
  const Image img = read_image(image_path);
  Rng rng = make_rng(f, 30);
  const ServerLinks links = make_links(f, cfg);
  const ConsistencyReport report = verify_consistency(img, id, cfg, links, rng);
  out << "id=" << id << "\n"
      << "responders=" << ::sss_prnu::detail::join_points(report.responders) << "\n"
      << "subsets=" << report.subsets.size() << "\n";
  for (const auto& s : report.subsets) {
    out << "subset=" << ::sss_prnu::detail::join_points(s.points)
        << " agrees=" << (s.agrees ? "true" : "false") << " plausible=" << (s.plausible ? "true" : "false")
        << " stable=" << (s.stable ? "true" : "false");
    if (s.sums) {
      out << " P=" << fmt_exact(s.sums->p_val) << " Q=" << fmt_exact(s.sums->q_val)
          << " R=" << fmt_exact(s.sums->r_val);
    } else {
      out << " error=\"" << s.failure << "\"";
    }
    out << "\n";
  }
  out << "suspects=" << ::sss_prnu::detail::join_points(report.suspects) << "\n";
  if (report.reference) out << "r=" << fmt_double(report.reference->r, 4) << "\n";
  out << (report.consistent ? "CONSISTENT" : "INCONSISTENT") << "\n";
  return report.consistent ? kOk : kProtocol;
}

inline int cmd_match_local(const std::string& fingerprint_path, const std::string& image_path, double threshold,
                           const CommonFlags& f, std::ostream& out) {
  out << "denoiser=gaussian(sigma=" << f.sigma << ",radius=" << f.radius << ")\n";
  const NoiseMatrix fp = read_nmat(fingerprint_path);
  const NoiseMatrix residual = extract_residual(read_image(image_path), GaussianDenoiser{f.sigma, f.radius});
  const double r = pearson(fp, residual);
  const bool matched = match_decision(r, threshold);
  out << "r_exact=" << fmt_exact(r) << "\n"
      << "r=" << fmt_double(r, 4) << "\n"
      << "threshold=" << fmt_exact(threshold) << "\n"
      << (matched ? "MATCH" : "NO-MATCH") << "\n";
  return matched ? kMatch : kNoMatch;
}

inline int cmd_serve(std::uint64_t point, const std::string& store, const std::string& listen, const CommonFlags& f,
                     std::ostream& out) {
  const ProtocolConfig cfg = make_config(f, 0.0);
  echo_config(out, f, cfg);
  auto server = std::make_shared<CloudServer>(cfg.scheme, cfg.scheme.field().from_u64(point), cfg.mode,
                                              std::filesystem::path(store));
  TcpServer tcp(server, Endpoint::parse(listen));
  out << "point=" << point << "\n"
      << "store=" << store << "\n"
      << "stored_ids=" << server->store().size() << "\n"
      << "listening=" << tcp.endpoint().str() << "\n"
      << std::flush;
  g_stop.store(false);
  std::signal(SIGINT, [](int) { g_stop.store(true); });
  std::signal(SIGTERM, [](int) { g_stop.store(true); });
  while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  tcp.stop();
  out << "stopped\n";
  return kOk;
}

}  // namespace detail

// Entry point shared by the binary and the tests. Returns the process exit
// code: 0 match/success, 1 no match, 2 usage error, 3 protocol error.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Privacy-preserving PRNU source-camera matching over Shamir shares"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "sss-prnu 0.1.0");
  CommonFlags f;

  std::string images_dir, out_path, id, image_path, fingerprint_path, store = "./store", listen = "127.0.0.1:0";
  double threshold = 0.0;
  int cameras = 2, images = 20, size = 64;
  double pattern_std = 0.02, shot_noise = 2.0;
  std::uint64_t point = 1;

  auto* fingerprint = app.add_subcommand("fingerprint", "Estimate a camera fingerprint from a directory of images");
  fingerprint->add_option("--images", images_dir, "Directory of .pgm/.ppm images")->required();
  fingerprint->add_option("--out", out_path, "Output NMAT file")->required();
  detail::add_denoiser_flags(*fingerprint, f);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-camera dataset");
  synth->add_option("--cameras", cameras)->capture_default_str();
  synth->add_option("--images", images, "Enrollment images per camera")->capture_default_str();
  synth->add_option("--size", size, "Image width and height")->capture_default_str();
  synth->add_option("--pattern-std", pattern_std)->capture_default_str();
  synth->add_option("--shot-noise", shot_noise)->capture_default_str();
  synth->add_option("--seed", f.seed, "Dataset seed (env SSS_PRNU_SEED overrides)");
  synth->add_option("--out", out_path, "Output directory")->required();

  auto* enroll_cmd = app.add_subcommand("enroll", "Share a fingerprint across the cloud servers");
  enroll_cmd->add_option("--fingerprint", fingerprint_path, "NMAT fingerprint")->required();
  enroll_cmd->add_option("--id", id, "Fingerprint id")->required();
  detail::add_field_flags(*enroll_cmd, f);
  detail::add_network_flags(*enroll_cmd, f);

  auto* serve = app.add_subcommand("serve", "Run one cloud server");
  serve->add_option("--point", point, "This server's evaluation point u_i")->capture_default_str();
  serve->add_option("--store", store, "Share store directory")->capture_default_str();
  serve->add_option("--listen", listen, "host:port to listen on")->capture_default_str();
  detail::add_field_flags(*serve, f);

  auto* query_cmd = app.add_subcommand("query", "Match a query image against an enrolled fingerprint");
  query_cmd->add_option("--image", image_path, "Query image (.pgm/.ppm)")->required();
  query_cmd->add_option("--id", id, "Fingerprint id")->required();
  query_cmd->add_option("--threshold", threshold, "Match threshold on r")->required();
  detail::add_field_flags(*query_cmd, f);
  detail::add_network_flags(*query_cmd, f);
  detail::add_denoiser_flags(*query_cmd, f);

  auto* verify = app.add_subcommand("verify", "Cross-check every quorum of servers for tampering");
  verify->add_option("--image", image_path, "Query image (.pgm/.ppm)")->required();
  verify->add_option("--id", id, "Fingerprint id")->required();
  verify->add_option("--threshold", threshold, "Threshold reported with the reference result")->capture_default_str();
  detail::add_field_flags(*verify, f);
  detail::add_network_flags(*verify, f);
  detail::add_denoiser_flags(*verify, f);

  auto* local = app.add_subcommand("match-local", "Plaintext matching (reference pipeline)");
  local->add_option("--fingerprint", fingerprint_path, "NMAT fingerprint")->required();
  local->add_option("--image", image_path, "Query image (.pgm/.ppm)")->required();
  local->add_option("--threshold", threshold, "Match threshold on r")->required();
  detail::add_denoiser_flags(*local, f);

  std::vector<const char*> argv{"sss-prnu"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*fingerprint) return detail::cmd_fingerprint(images_dir, out_path, f, out);
    if (*synth) return detail::cmd_synth(cameras, images, size, pattern_std, shot_noise, f, out_path, out);
    if (*enroll_cmd) return detail::cmd_enroll(fingerprint_path, id, f, out);
    if (*serve) return detail::cmd_serve(point, store, listen, f, out);
    if (*query_cmd) return detail::cmd_query(image_path, id, threshold, f, out);
    if (*verify) return detail::cmd_verify(image_path, id, threshold, f, out);
    if (*local) return detail::cmd_match_local(fingerprint_path, image_path, threshold, f, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::kQuorumNotReached:
      case ErrorCode::kEnrollTimeout:
      case ErrorCode::kNegativeSquareSum:
      case ErrorCode::kUnknownFingerprint:
      case ErrorCode::kIdConflict:
      case ErrorCode::kTransport:
        return kProtocol;
      default:
        return kUsage;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace sss_prnu::cli
