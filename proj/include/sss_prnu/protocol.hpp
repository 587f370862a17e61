#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "sss_prnu/error.hpp"
#include "sss_prnu/fixed_point.hpp"
#include "sss_prnu/prnu.hpp"
#include "sss_prnu/secure_correlation.hpp"
#include "sss_prnu/server.hpp"
#include "sss_prnu/transport.hpp"
#include "sss_prnu/wire.hpp"

namespace sss_prnu {

struct ProtocolConfig {
  ShareScheme scheme{PrimeField{}, 2, 4};
  Scaling scaling{4};
  CenteringMode mode = CenteringMode::kPlaintext;
  double threshold = 0.0;
  Denoiser denoiser = GaussianDenoiser{};
  std::chrono::milliseconds timeout{2000};

  int quorum() const { return scheme.quorum(); }
};

// channels[i] talks to the server holding scheme.points()[i].
using ServerLinks = std::vector<std::shared_ptr<Channel>>;

namespace detail {

inline void check_links(const ProtocolConfig& cfg, const ServerLinks& links) {
  if (links.size() != static_cast<std::size_t>(cfg.scheme.n())) {
    throw InvalidParams("expected " + std::to_string(cfg.scheme.n()) + " server links, got " +
                        std::to_string(links.size()));
  }
}

// Outcome of one request in a fan-out.
struct Reply {
  std::optional<wire::Frame> frame;
  std::string failure;  // transport failure text when frame is empty
};

// Sends requests[i] on links[i] concurrently. Returns once `enough`
// replies of type `wanted` have arrived (or every request has finished or timed out), with
// the arrival order of the replies received so far. Stragglers keep
// running on detached threads that own everything they touch.
class FanOut {
 public:
  struct Result {
    std::vector<std::optional<Reply>> replies;  // empty slot: no answer yet
    std::vector<std::size_t> arrival;           // indices with a frame, in arrival order
  };

  static Result run(const ServerLinks& links, std::vector<wire::Frame> requests, wire::MessageType wanted,
                    std::size_t enough, std::chrono::milliseconds timeout) {
    auto state = std::make_shared<State>();
    state->replies.resize(links.size());
    for (std::size_t i = 0; i < links.size(); ++i) {
      std::thread([state, link = links[i], request = std::move(requests[i]), wanted, i] {
        Reply reply;
        try {
          reply.frame = link->call(request);
        } catch (const std::exception& e) {
          reply.failure = e.what();
        }
        std::lock_guard lock(state->mu);
        if (reply.frame) {
          state->arrival.push_back(i);
          if (reply.frame->type == wanted) ++state->useful;
        }
        state->replies[i] = std::move(reply);
        ++state->finished;
        state->cv.notify_all();
      }).detach();
    }
    std::unique_lock lock(state->mu);
    // Links enforce their own timeouts; the extra slack only guards against
    // a link that ignores its deadline.
    state->cv.wait_for(lock, timeout + std::chrono::milliseconds(500), [&] {
      return state->finished == links.size() || state->useful >= enough;
    });
    return Result{state->replies, state->arrival};
  }

 private:
  struct State {
    std::mutex mu;
    std::condition_variable cv;
    std::vector<std::optional<Reply>> replies;
    std::vector<std::size_t> arrival;
    std::size_t finished = 0;
    std::size_t useful = 0;
  };
};

inline std::string join_points(const std::vector<std::uint64_t>& pts) {
  std::string s;
  for (std::size_t i = 0; i < pts.size(); ++i) s += (i ? "," : "") + std::to_string(pts[i]);
  return s;
}

}  // namespace detail

struct EnrollReport {
  std::vector<std::uint64_t> acknowledged;
  bool already_enrolled = false;  // every server already held identical content
};

// Fingerprint Source: share the fingerprint once and deliver share i to
// server i. All-or-nothing: if any server cannot be reached, servers that
// stored the new shares are told to drop them.
inline EnrollReport enroll(const NoiseMatrix& fingerprint, const std::string& id, const ProtocolConfig& cfg,
                           const ServerLinks& links, Rng& rng) {
  detail::check_links(cfg, links);
  wire::validate_id(id);
  const auto& pts = cfg.scheme.points();
  auto encrypted = prepare_vector(fingerprint, cfg.scaling, cfg.scheme, cfg.mode, rng);

  std::vector<wire::Frame> requests;
  for (const EncryptedVector& ev : encrypted) requests.push_back(wire::make(wire::Enroll{id, ev.shares}));
  auto result = detail::FanOut::run(links, std::move(requests), wire::MessageType::kEnrollAck, links.size(), cfg.timeout);

  std::vector<std::uint64_t> unreachable, stored, present, conflicting;
  std::string other_error;
  for (std::size_t i = 0; i < links.size(); ++i) {
    const auto& reply = result.replies[i];
    if (!reply || !reply->frame) {
      unreachable.push_back(pts[i].value);
      continue;
    }
    const wire::Frame& f = *reply->frame;
    if (f.type == wire::MessageType::kEnrollAck) {
      (wire::parse_enroll_ack(f).already_present ? present : stored).push_back(pts[i].value);
    } else if (f.type == wire::MessageType::kError) {
      const auto err = wire::parse_error(f);
      if (static_cast<ErrorCode>(err.code) == ErrorCode::kIdConflict) {
        conflicting.push_back(pts[i].value);
      } else {
        other_error = err.message;
        unreachable.push_back(pts[i].value);
      }
    } else {
      other_error = "unexpected reply type";
      unreachable.push_back(pts[i].value);
    }
  }

  auto roll_back = [&] {
    for (std::size_t i = 0; i < links.size(); ++i) {
      if (std::find(stored.begin(), stored.end(), pts[i].value) == stored.end()) continue;
      try {
        links[i]->call(wire::make(wire::Unenroll{id}));
      } catch (const std::exception&) {
        // Server vanished after storing; nothing more we can do from here.
      }
    }
  };

  if (!unreachable.empty()) {
    roll_back();
    throw EnrollTimeout("servers " + detail::join_points(unreachable) + " did not acknowledge" +
                        (other_error.empty() ? "" : " (" + other_error + ")"));
  }
  if (!conflicting.empty()) {
    roll_back();
    // Same id already enrolled under an earlier sharing. Accept the retry
    // only if those shares open to exactly what we just encoded.
    if (!stored.empty()) {
      throw IdConflict("id '" + id + "' is enrolled on servers " + detail::join_points(conflicting) +
                       " but not on " + detail::join_points(stored));
    }
    std::vector<ShareVector> existing;
    for (std::size_t i = 0; i < links.size(); ++i) {
      const wire::Frame f = links[i]->call(wire::make(wire::Fetch{id}));
      if (f.type == wire::MessageType::kError) wire::raise(wire::parse_error(f));
      existing.push_back(wire::parse_share(f, cfg.scheme.field()).share);
    }
    std::vector<ShareVector> fresh;
    for (const EncryptedVector& ev : encrypted) fresh.push_back(ev.shares);
    if (reconstruct_vector(existing, cfg.scheme.field()) != reconstruct_vector(fresh, cfg.scheme.field())) {
      throw IdConflict("id '" + id + "' is already enrolled with a different fingerprint");
    }
    EnrollReport report;
    for (FieldElement p : pts) report.acknowledged.push_back(p.value);
    report.already_enrolled = true;
    return report;
  }
  EnrollReport report;
  for (FieldElement p : pts) report.acknowledged.push_back(p.value);
  report.already_enrolled = stored.empty();
  return report;
}

// Fetch one server's stored share (diagnostics and tests).
inline ShareVector fetch_share(const std::string& id, std::size_t server_index, const ProtocolConfig& cfg,
                               const ServerLinks& links) {
  detail::check_links(cfg, links);
  const wire::Frame f = links.at(server_index)->call(wire::make(wire::Fetch{id}));
  if (f.type == wire::MessageType::kError) wire::raise(wire::parse_error(f));
  return wire::parse_share(f, cfg.scheme.field()).share;
}

enum class Collection { kFirstQuorum, kAll };

struct QueryResponses {
  std::vector<PartialCorrelation> partials;  // arrival order
  std::vector<std::uint64_t> unknown_at;     // servers lacking the id
  std::vector<std::uint64_t> failed;         // unreachable or erroring servers
};

namespace detail {

inline QueryResponses send_query(const NoiseMatrix& residual, const std::string& id, const ProtocolConfig& cfg,
                                 const ServerLinks& links, Rng& rng, Collection collection) {
  check_links(cfg, links);
  wire::validate_id(id);
  const auto& pts = cfg.scheme.points();
  auto encrypted = prepare_vector(residual, cfg.scaling, cfg.scheme, cfg.mode, rng);
  std::vector<wire::Frame> requests;
  for (const EncryptedVector& ev : encrypted) requests.push_back(wire::make(wire::Query{id, ev.shares}));
  const std::size_t enough = collection == Collection::kAll ? links.size() : static_cast<std::size_t>(cfg.quorum());
  auto result = FanOut::run(links, std::move(requests), wire::MessageType::kPartial, enough, cfg.timeout);

  QueryResponses out;
  for (std::size_t i : result.arrival) {
    const wire::Frame& f = *result.replies[i]->frame;
    try {
      if (f.type == wire::MessageType::kPartial) {
        PartialCorrelation part = wire::parse_partial(f, cfg.scheme).partial;
        if (part.point != pts[i]) throw PointMismatch("partial from wrong point");
        out.partials.push_back(part);
        continue;
      }
      if (f.type == wire::MessageType::kError &&
          static_cast<ErrorCode>(wire::parse_error(f).code) == ErrorCode::kUnknownFingerprint) {
        out.unknown_at.push_back(pts[i].value);
        continue;
      }
    } catch (const Error&) {
    }
    out.failed.push_back(pts[i].value);
  }
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (!result.replies[i] || !result.replies[i]->frame) out.failed.push_back(pts[i].value);
  }
  return out;
}

}  // namespace detail

// Match Maker + Match Maker Server for an already extracted residual X'.
// The first 2l-1 partials to arrive are opened.
inline MatchResult query_residual(const NoiseMatrix& residual, const std::string& id, const ProtocolConfig& cfg,
                                  const ServerLinks& links, Rng& rng,
                                  Collection collection = Collection::kFirstQuorum) {
  const auto responses = detail::send_query(residual, id, cfg, links, rng, collection);
  const auto quorum = static_cast<std::size_t>(cfg.quorum());
  if (responses.partials.size() < quorum) {
    if (!responses.unknown_at.empty()) {
      throw UnknownFingerprint("'" + id + "' not enrolled on servers " + detail::join_points(responses.unknown_at));
    }
    throw QuorumNotReached("only " + std::to_string(responses.partials.size()) + " of " + std::to_string(quorum) +
                           " required partials arrived (failed: " + detail::join_points(responses.failed) + ")");
  }
  std::vector<PartialCorrelation> chosen(responses.partials.begin(), responses.partials.begin() + quorum);
  // Report the subset in point order regardless of arrival order.
  std::sort(chosen.begin(), chosen.end(), [](const auto& a, const auto& b) { return a.point < b.point; });
  const CorrelationSums sums = reconstruct_partials(chosen, cfg.scheme, cfg.scaling, cfg.mode, residual.size());
  return finalize(sums, cfg.threshold);
}

// Full query from an image: the Match Maker extracts X' first.
inline MatchResult query(const Image& image, const std::string& id, const ProtocolConfig& cfg,
                         const ServerLinks& links, Rng& rng, Collection collection = Collection::kFirstQuorum) {
  return query_residual(extract_residual(image, cfg.denoiser), id, cfg, links, rng, collection);
}

struct SubsetOutcome {
  std::vector<std::uint64_t> points;
  std::optional<CorrelationSums> sums;  // first round; empty when opening failed
  std::string failure;
  bool plausible = false;  // Q >= 0, R >= 0 and P^2 <= Q R
  bool stable = false;     // same triple from both independent sharings
  bool agrees = false;     // matches the reference group
};

struct ConsistencyReport {
  bool consistent = false;
  std::vector<std::uint64_t> responders;
  std::vector<SubsetOutcome> subsets;
  std::vector<std::uint64_t> suspects;
  // suspect point -> indices into `subsets` that disagree and contain it
  std::map<std::uint64_t, std::vector<std::size_t>> implicating;
  std::optional<MatchResult> reference;
};

namespace detail {

inline void for_each_combination(std::size_t n, std::size_t k, const auto& fn) {
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  for (;;) {
    fn(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

inline bool plausible(const CorrelationSums& s, const PrimeField& f) {
  const i128 p = f.to_signed(s.p);
  const i128 q = f.to_signed(s.q);
  const i128 r = f.to_signed(s.r);
  if (q < 0 || r < 0) return false;
  return static_cast<u128>(p * p) <= static_cast<u128>(q) * static_cast<u128>(r);
}

// point -> partial, for servers that answered.
inline std::map<std::uint64_t, PartialCorrelation> by_point(const QueryResponses& r) {
  std::map<std::uint64_t, PartialCorrelation> out;
  for (const auto& p : r.partials) out.emplace(p.point.value, p);
  return out;
}

}  // namespace detail

// Opens P, Q, R over every quorum-sized subset of responding servers, twice,
// from two independent sharings of the residual. Honest subsets open to the
// same triple both times. A subset containing a server with a corrupted
// fingerprint share does not: its P error is the corruption times a fresh
// random share. The reference group is the largest set of identical, stable,
// plausible triples; servers outside every agreeing subset are suspects.
inline ConsistencyReport verify_consistency(const NoiseMatrix& residual, const std::string& id,
                                            const ProtocolConfig& cfg, const ServerLinks& links, Rng& rng) {
  const auto quorum = static_cast<std::size_t>(cfg.quorum());
  if (static_cast<std::size_t>(cfg.scheme.n()) <= quorum) {
    throw NotApplicable("n = 2l-1 leaves a single quorum; tampering cannot be detected");
  }
  std::array<std::map<std::uint64_t, PartialCorrelation>, 2> rounds;
  for (auto& round : rounds) {
    const auto responses = detail::send_query(residual, id, cfg, links, rng, Collection::kAll);
    if (responses.partials.size() < quorum) {
      if (!responses.unknown_at.empty()) {
        throw UnknownFingerprint("'" + id + "' not enrolled on servers " + detail::join_points(responses.unknown_at));
      }
      throw QuorumNotReached("only " + std::to_string(responses.partials.size()) + " servers responded");
    }
    round = detail::by_point(responses);
  }

  const PrimeField& f = cfg.scheme.field();
  ConsistencyReport report;
  for (const auto& [pt, part] : rounds[0]) {
    if (rounds[1].count(pt)) report.responders.push_back(pt);
  }
  if (report.responders.size() < quorum) {
    throw QuorumNotReached("only " + std::to_string(report.responders.size()) + " servers answered both rounds");
  }

  auto open = [&](const std::map<std::uint64_t, PartialCorrelation>& round, const std::vector<std::uint64_t>& pts) {
    std::vector<PartialCorrelation> subset;
    for (std::uint64_t p : pts) subset.push_back(round.at(p));
    return reconstruct_partials(subset, cfg.scheme, cfg.scaling, cfg.mode, residual.size());
  };
  auto key = [](const CorrelationSums& s) { return std::tuple(s.p.value, s.q.value, s.r.value); };

  detail::for_each_combination(report.responders.size(), quorum, [&](const std::vector<std::size_t>& idx) {
    SubsetOutcome outcome;
    for (std::size_t i : idx) outcome.points.push_back(report.responders[i]);
    try {
      outcome.sums = open(rounds[0], outcome.points);
      outcome.plausible = detail::plausible(*outcome.sums, f);
      outcome.stable = key(open(rounds[1], outcome.points)) == key(*outcome.sums);
    } catch (const Error& e) {
      outcome.failure = e.what();
    }
    report.subsets.push_back(std::move(outcome));
  });

  std::map<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>, std::size_t> counts;
  for (const auto& o : report.subsets) {
    if (o.sums && o.plausible && o.stable) ++counts[key(*o.sums)];
  }
  report.consistent = counts.size() == 1 && counts.begin()->second == report.subsets.size();

  std::optional<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>> ref;
  std::size_t best = 0;
  bool tie = false;
  for (const auto& [k, c] : counts) {
    if (c > best) {
      best = c;
      ref = k;
      tie = false;
    } else if (c == best) {
      tie = true;
    }
  }
  if (!ref || tie) return report;

  std::set<std::uint64_t> vouched;
  for (auto& o : report.subsets) {
    o.agrees = o.sums && o.plausible && o.stable && key(*o.sums) == *ref;
    if (o.agrees) {
      vouched.insert(o.points.begin(), o.points.end());
      if (!report.reference) {
        try {
          report.reference = finalize(*o.sums, cfg.threshold);
        } catch (const Error&) {
        }
      }
    }
  }
  for (std::uint64_t p : report.responders) {
    if (vouched.count(p)) continue;
    report.suspects.push_back(p);
    auto& list = report.implicating[p];
    for (std::size_t s = 0; s < report.subsets.size(); ++s) {
      const auto& pts = report.subsets[s].points;
      if (!report.subsets[s].agrees && std::find(pts.begin(), pts.end(), p) != pts.end()) list.push_back(s);
    }
  }
  return report;
}

inline ConsistencyReport verify_consistency(const Image& image, const std::string& id, const ProtocolConfig& cfg,
                                            const ServerLinks& links, Rng& rng) {
  return verify_consistency(extract_residual(image, cfg.denoiser), id, cfg, links, rng);
}

// Which servers are down or tampered in a simulated run.
struct TamperRule {
  std::size_t index = 0;          // element of the stored share to perturb
  FieldElement delta{1};          // added to that element
};

struct FaultPlan {
  std::set<std::uint64_t> downed_servers;
  std::map<std::uint64_t, TamperRule> tampered_servers;

  void validate() const {
    for (const auto& [p, rule] : tampered_servers) {
      if (downed_servers.count(p)) throw InvalidParams("server " + std::to_string(p) + " both down and tampered");
      if (rule.delta.value == 0) throw InvalidParams("tamper delta must be nonzero");
    }
  }
};

// n in-process cloud servers with switchable links, for tests and the
// fault-injection harness.
class LocalCluster {
 public:
  explicit LocalCluster(const ProtocolConfig& cfg) : cfg_(cfg) {
    for (FieldElement p : cfg.scheme.points()) {
      auto server = std::make_shared<CloudServer>(cfg.scheme, p, cfg.mode);
      auto link = std::make_shared<InProcessChannel>(server);
      servers_.push_back(server);
      raw_links_.push_back(link);
      auto trace = std::make_shared<Trace>();
      traces_.push_back(trace);
      links_.push_back(std::make_shared<TracingChannel>(link, trace));
    }
  }

  const ServerLinks& links() const { return links_; }
  CloudServer& server(std::size_t i) { return *servers_.at(i); }
  InProcessChannel& link(std::size_t i) { return *raw_links_.at(i); }
  const Trace& trace(std::size_t i) const { return *traces_.at(i); }
  std::size_t size() const { return servers_.size(); }

  // Applies outages (and clears old ones); tampering mutates stores for `id`.
  void apply(const FaultPlan& plan, const std::string& id) {
    plan.validate();
    const auto& pts = cfg_.scheme.points();
    for (std::size_t i = 0; i < pts.size(); ++i) raw_links_[i]->set_up(!plan.downed_servers.count(pts[i].value));
    for (const auto& [p, rule] : plan.tampered_servers) {
      const int i = cfg_.scheme.index_of(FieldElement{p});
      if (i < 0) throw InvalidParams("tampered point " + std::to_string(p) + " not in scheme");
      servers_[static_cast<std::size_t>(i)]->store().tamper(id, rule.index, rule.delta);
    }
  }

  void all_up() {
    for (auto& l : raw_links_) l->set_up(true);
  }

 private:
  ProtocolConfig cfg_;
  std::vector<std::shared_ptr<CloudServer>> servers_;
  std::vector<std::shared_ptr<InProcessChannel>> raw_links_;
  std::vector<std::shared_ptr<Trace>> traces_;
  ServerLinks links_;
};

}  // namespace sss_prnu
