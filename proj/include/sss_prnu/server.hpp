#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include "sss_prnu/image_io.hpp"
#include "sss_prnu/secure_correlation.hpp"
#include "sss_prnu/wire.hpp"

namespace sss_prnu {

// A cloud server's fingerprint shares, keyed by fingerprint id. Optionally
// mirrored to one file per id under a directory.
class ServerStore {
 public:
  ServerStore(PrimeField field, FieldElement point, std::optional<std::filesystem::path> dir = std::nullopt)
      : field_(field), point_(point), dir_(std::move(dir)) {
    if (dir_) load();
  }

  FieldElement point() const { return point_; }

  enum class PutResult { kStored, kAlreadyPresent, kConflict };

  PutResult put(const std::string& id, const ShareVector& share) {
    if (share.point != point_) throw PointMismatch("share for point " + std::to_string(share.point.value) +
                                                   " sent to server " + std::to_string(point_.value));
    std::lock_guard lock(mu_);
    auto it = entries_.find(id);
    if (it != entries_.end()) return it->second == share ? PutResult::kAlreadyPresent : PutResult::kConflict;
    if (dir_) write_file(path_for(id), serialize(share));
    entries_.emplace(id, share);
    return PutResult::kStored;
  }

  std::optional<ShareVector> get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  bool erase(const std::string& id) {
    std::lock_guard lock(mu_);
    if (entries_.erase(id) == 0) return false;
    if (dir_) std::filesystem::remove(path_for(id));
    return true;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

  // Fault injection: add delta to one stored element.
  void tamper(const std::string& id, std::size_t index, FieldElement delta) {
    std::lock_guard lock(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) throw UnknownFingerprint(id);
    if (index >= it->second.size()) throw OutOfRange("tamper index past end of share vector");
    it->second.values[index] = field_.add(it->second.values[index], delta);
  }

 private:
  std::filesystem::path path_for(const std::string& id) const { return *dir_ / (id + ".share"); }

  void load() {
    std::filesystem::create_directories(*dir_);
    for (const auto& entry : std::filesystem::directory_iterator(*dir_)) {
      if (entry.path().extension() != ".share") continue;
      ShareVector sv = deserialize_share_vector(read_file(entry.path()), field_);
      if (sv.point != point_) {
        throw PointMismatch(entry.path().string() + " belongs to point " + std::to_string(sv.point.value));
      }
      entries_.emplace(entry.path().stem().string(), std::move(sv));
    }
  }

  PrimeField field_;
  FieldElement point_;
  std::optional<std::filesystem::path> dir_;
  mutable std::mutex mu_;
  std::map<std::string, ShareVector> entries_;
};

// Request handler for one cloud server. Sees only its own shares.
class CloudServer {
 public:
  CloudServer(ShareScheme scheme, FieldElement point, CenteringMode mode,
              std::optional<std::filesystem::path> store_dir = std::nullopt)
      : scheme_(std::move(scheme)), mode_(mode), store_(scheme_.field(), point, std::move(store_dir)) {
    if (scheme_.index_of(point) < 0) throw InvalidParams("point " + std::to_string(point.value) + " not in scheme");
  }

  FieldElement point() const { return store_.point(); }
  ServerStore& store() { return store_; }
  const ShareScheme& scheme() const { return scheme_; }

  wire::Frame handle(const wire::Frame& request) {
    try {
      return dispatch(request);
    } catch (const Error& e) {
      return wire::make_error(e.code(), e.what());
    } catch (const std::exception& e) {
      return wire::make_error(ErrorCode::kMalformed, e.what());
    }
  }

  // Full byte-level round trip; malformed input yields an ERROR frame.
  Bytes handle_bytes(std::span<const std::uint8_t> request) {
    wire::Frame reply;
    try {
      reply = handle(wire::decode_frame(request));
    } catch (const Error& e) {
      reply = wire::make_error(e.code(), e.what());
    }
    return wire::encode_frame(reply);
  }

 private:
  wire::Frame dispatch(const wire::Frame& request) {
    const PrimeField& f = scheme_.field();
    switch (request.type) {
      case wire::MessageType::kEnroll: {
        auto m = wire::parse_enroll(request, f);
        if (m.share.degree_hint != scheme_.fresh_degree()) throw DegreeMismatch("enrolled share must be fresh");
        switch (store_.put(m.id, m.share)) {
          case ServerStore::PutResult::kStored: return wire::make(wire::EnrollAck{false});
          case ServerStore::PutResult::kAlreadyPresent: return wire::make(wire::EnrollAck{true});
          case ServerStore::PutResult::kConflict: throw IdConflict("id '" + m.id + "' holds different shares");
        }
        break;
      }
      case wire::MessageType::kUnenroll: {
        auto m = wire::parse_unenroll(request);
        store_.erase(m.id);
        return wire::make(wire::EnrollAck{false});
      }
      case wire::MessageType::kFetch: {
        auto m = wire::parse_fetch(request);
        auto stored = store_.get(m.id);
        if (!stored) throw UnknownFingerprint("server " + std::to_string(point().value) + ": '" + m.id + "'");
        return wire::make(wire::ShareMsg{*stored});
      }
      case wire::MessageType::kQuery: {
        auto m = wire::parse_query(request, f);
        auto stored = store_.get(m.id);
        if (!stored) throw UnknownFingerprint("server " + std::to_string(point().value) + ": '" + m.id + "'");
        if (m.share.point != point()) throw PointMismatch("query share addressed to another server");
        return wire::make(wire::Partial{partials(*stored, m.share)});
      }
      default:
        break;
    }
    throw Malformed("server cannot handle message type " + std::to_string(static_cast<int>(request.type)));
  }

  PartialCorrelation partials(const ShareVector& fingerprint, const ShareVector& query) const {
    const bool pre_centered = mode_ == CenteringMode::kPlaintext;
    // The scaling only matters to decoding, which servers never do.
    EncryptedVector a{fingerprint, Scaling{}, mode_, pre_centered, 0};
    EncryptedVector b{query, Scaling{}, mode_, pre_centered, 0};
    if (!pre_centered) {
      a = center_shares(a, a.size(), scheme_.field());
      b = center_shares(b, b.size(), scheme_.field());
    }
    return compute_partials(a, b, scheme_);
  }

  ShareScheme scheme_;
  CenteringMode mode_;
  ServerStore store_;
};

}  // namespace sss_prnu
