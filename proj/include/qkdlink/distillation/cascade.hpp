#pragma once

// Cascade reconciliation. Alice holds the reference key and only answers
// parity queries; Bob corrects his key toward hers.
//
// Pass p works on a seeded shuffle of the key (pass 0 unshuffled) cut into
// blocks of min(cap, k1 * 2^p). Each pass first asks for all block parities,
// then binary-searches every odd block. A flip found in one pass toggles the
// parity of the blocks that contain that bit in all started passes, and any
// block that turns odd gets searched again. Searches of the lowest pass with
// pending work run in lockstep, one query each per request frame.

#include "qkdlink/distillation/bits.hpp"
#include "qkdlink/random.hpp"
#include "qkdlink/service/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace qkdlink::distill {

using service::ParityQuery;
using service::ParityRequest;
using service::ParityResponse;

struct CascadeSchedule {
  std::uint32_t first_block = 8192;
  std::uint8_t passes = 4;
  std::uint32_t cap = 8192;

  std::uint32_t block_size(int pass) const {
    std::uint64_t k = first_block;
    for (int i = 0; i < pass && k < cap; ++i) k *= 2;
    return static_cast<std::uint32_t>(std::min<std::uint64_t>(k, cap));
  }
};

/// k1 = min(cap, ceil(0.73 / q)); the cap alone when q is unknown or zero.
inline std::uint32_t first_block_size(double q, std::uint32_t cap) {
  if (!(q > 0.0)) return cap;
  const double k = std::ceil(0.73 / q);
  return static_cast<std::uint32_t>(std::clamp(k, 2.0, static_cast<double>(cap)));
}

/// Position order of pass `pass`: identity for pass 0, otherwise a
/// Fisher-Yates shuffle driven by mt19937_64 seeded per pass.
inline std::vector<std::uint32_t> cascade_permutation(std::uint64_t seed, int pass, std::size_t n) {
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  if (pass == 0) return perm;
  Rng rng(derive_seed(seed, "cascade-pass-" + std::to_string(pass)));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = bounded_draw(rng, i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

/// Alice's side: answers parity queries from per-pass prefix parities.
class CascadeResponder {
 public:
  CascadeResponder(const Bits& key, std::uint64_t seed, const CascadeSchedule& schedule) : n_(key.size()) {
    prefix_.resize(schedule.passes);
    for (int p = 0; p < schedule.passes; ++p) {
      const auto perm = cascade_permutation(seed, p, n_);
      auto& pre = prefix_[static_cast<std::size_t>(p)];
      pre.assign(n_ + 1, 0);
      for (std::size_t i = 0; i < n_; ++i) pre[i + 1] = pre[i] ^ (key[perm[i]] & 1u);
    }
  }

  ParityResponse answer(const ParityRequest& req) {
    ParityResponse resp;
    resp.parities.reserve(req.queries.size());
    for (const auto& q : req.queries) {
      if (q.pass >= prefix_.size() || q.begin >= q.end || q.end > n_)
        throw std::invalid_argument("CASCADE_PARITY_REQ: query out of range");
      const auto& pre = prefix_[q.pass];
      resp.parities.push_back(pre[q.end] ^ pre[q.begin]);
    }
    disclosed_ += req.queries.size();
    return resp;
  }

  std::uint64_t disclosed() const { return disclosed_; }

 private:
  std::size_t n_;
  std::vector<std::vector<std::uint8_t>> prefix_;
  std::uint64_t disclosed_ = 0;
};

/// Bob's side as a request / response state machine.
class CascadeCorrector {
 public:
  CascadeCorrector(Bits key, std::uint64_t seed, const CascadeSchedule& schedule)
      : key_(std::move(key)), schedule_(schedule) {
    if (key_.size() > UINT32_MAX) throw std::length_error("cascade: key too long");
    const std::size_t n = key_.size();
    for (int p = 0; p < schedule_.passes; ++p) {
      Pass pass;
      pass.perm = cascade_permutation(seed, p, n);
      pass.inverse.resize(n);
      for (std::size_t i = 0; i < n; ++i) pass.inverse[pass.perm[i]] = static_cast<std::uint32_t>(i);
      Bits shuffled(n);
      for (std::size_t i = 0; i < n; ++i) shuffled[i] = key_[pass.perm[i]];
      pass.tree = XorFenwick(shuffled);
      pass.k = schedule_.block_size(p);
      pass.blocks = n ? (n + pass.k - 1) / pass.k : 0;
      passes_.push_back(std::move(pass));
    }
  }

  /// Next query batch; nullopt once every pass is started and no block is odd.
  std::optional<ParityRequest> next_request() {
    if (awaiting_ != Awaiting::none) throw std::logic_error("cascade: response outstanding");
    while (true) {
      if (select_issued()) {
        ParityRequest req;
        req.queries.reserve(issued_.size());
        for (const auto& s : issued_)
          req.queries.push_back({s.pass, s.begin, static_cast<std::uint32_t>(s.begin + (s.end - s.begin) / 2)});
        awaiting_ = Awaiting::search;
        return req;
      }
      if (started_ < passes_.size()) {
        auto& pass = passes_[started_];
        if (pass.blocks == 0) {
          ++started_;
          continue;
        }
        ParityRequest req;
        req.queries.reserve(pass.blocks);
        for (std::size_t b = 0; b < pass.blocks; ++b) {
          const auto [lo, hi] = block_range(pass, b);
          req.queries.push_back({static_cast<std::uint8_t>(started_), lo, hi});
        }
        awaiting_ = Awaiting::top_level;
        return req;
      }
      return std::nullopt;
    }
  }

  void on_response(const ParityResponse& resp) {
    if (awaiting_ == Awaiting::none) throw std::logic_error("cascade: unexpected response");
    const auto mode = awaiting_;
    awaiting_ = Awaiting::none;
    leaked_ += resp.parities.size();
    if (mode == Awaiting::top_level) {
      auto& pass = passes_[started_];
      if (resp.parities.size() != pass.blocks) throw std::runtime_error("cascade: response size mismatch");
      pass.alice_block.assign(resp.parities.begin(), resp.parities.end());
      pass.searching.assign(pass.blocks, 0);
      const auto p = static_cast<std::uint8_t>(started_);
      ++started_;
      for (std::size_t b = 0; b < pass.blocks; ++b) maybe_search(p, b);
      return;
    }
    if (resp.parities.size() != issued_.size()) throw std::runtime_error("cascade: response size mismatch");
    auto current = std::move(issued_);
    issued_.clear();
    for (std::size_t i = 0; i < current.size(); ++i) {
      const Search& s = current[i];
      const std::uint32_t mid = s.begin + (s.end - s.begin) / 2;
      const std::uint8_t a_left = resp.parities[i] & 1u;
      auto& known = passes_[s.pass].known;
      known[node(s.begin, mid)] = a_left;
      known[node(mid, s.end)] = s.alice_parity ^ a_left;
      advance(s);
    }
  }

  bool done() const {
    return awaiting_ == Awaiting::none && searches_.empty() && issued_.empty() && started_ == passes_.size();
  }
  const Bits& key() const { return key_; }
  std::uint64_t leaked() const { return leaked_; }
  /// Original key positions flipped, in the order they were corrected.
  const std::vector<std::uint32_t>& flips() const { return flips_; }

 private:
  struct Pass {
    std::vector<std::uint32_t> perm, inverse;
    XorFenwick tree;
    std::uint32_t k = 0;
    std::size_t blocks = 0;
    std::vector<std::uint8_t> alice_block;
    std::vector<std::uint8_t> searching;
    /// Alice's parities of sub-ranges learned so far; her key never changes.
    std::unordered_map<std::uint64_t, std::uint8_t> known;
  };
  struct Search {
    std::uint8_t pass;
    std::uint32_t block;
    std::uint32_t begin, end;
    std::uint8_t alice_parity;
  };
  enum class Awaiting { none, top_level, search };

  std::pair<std::uint32_t, std::uint32_t> block_range(const Pass& pass, std::size_t b) const {
    const auto lo = static_cast<std::uint32_t>(b * pass.k);
    const auto hi = static_cast<std::uint32_t>(std::min<std::size_t>(key_.size(), (b + 1) * std::size_t{pass.k}));
    return {lo, hi};
  }

  /// Moves the pending searches of the lowest pass into issued_, dropping
  /// any whose range was evened out by an earlier flip. Searches in other
  /// passes wait: a flip found now may settle them for free.
  bool select_issued() {
    while (!searches_.empty()) {
      std::uint8_t lowest = searches_.front().pass;
      for (const auto& s : searches_) lowest = std::min(lowest, s.pass);
      std::vector<Search> rest, candidates;
      for (auto& s : searches_) (s.pass == lowest ? candidates : rest).push_back(s);
      searches_ = std::move(rest);
      for (const auto& s : candidates) {
        if (passes_[s.pass].tree.range(s.begin, s.end) == s.alice_parity)
          finish(s);
        else
          issued_.push_back(s);
      }
      if (!issued_.empty()) return true;
    }
    return false;
  }

  static std::uint64_t node(std::uint32_t begin, std::uint32_t end) {
    return (std::uint64_t{begin} << 32) | end;
  }

  void maybe_search(std::uint8_t p, std::size_t b) {
    auto& pass = passes_[p];
    if (pass.searching[b]) return;
    const auto [lo, hi] = block_range(pass, b);
    if (pass.tree.range(lo, hi) == pass.alice_block[b]) return;
    pass.searching[b] = 1;
    advance({p, static_cast<std::uint32_t>(b), lo, hi, pass.alice_block[b]});
  }

  /// Descends through halves whose parity is already known; queues a query
  /// for the first unknown one.
  void advance(Search s) {
    auto& pass = passes_[s.pass];
    while (s.end - s.begin > 1) {
      const std::uint32_t mid = s.begin + (s.end - s.begin) / 2;
      const auto it = pass.known.find(node(s.begin, mid));
      if (it == pass.known.end()) {
        searches_.push_back(s);
        return;
      }
      const std::uint8_t a_left = it->second;
      const std::uint8_t a_right = s.alice_parity ^ a_left;
      if (pass.tree.range(s.begin, mid) != a_left) {
        s.end = mid;
        s.alice_parity = a_left;
      } else if (pass.tree.range(mid, s.end) != a_right) {
        s.begin = mid;
        s.alice_parity = a_right;
      } else {
        // Fixed meanwhile by a flip from another search.
        finish(s);
        return;
      }
    }
    flip(pass.perm[s.begin]);
    finish(s);
  }

  void finish(const Search& s) {
    passes_[s.pass].searching[s.block] = 0;
    maybe_search(s.pass, s.block);
  }

  void flip(std::uint32_t pos) {
    key_[pos] ^= 1u;
    flips_.push_back(pos);
    for (auto& pass : passes_) pass.tree.flip(pass.inverse[pos]);
    for (std::size_t q = 0; q < started_; ++q) {
      auto& pass = passes_[q];
      maybe_search(static_cast<std::uint8_t>(q), pass.inverse[pos] / pass.k);
    }
  }

  Bits key_;
  CascadeSchedule schedule_;
  std::vector<Pass> passes_;
  std::vector<Search> searches_;
  std::vector<Search> issued_;
  std::size_t started_ = 0;
  Awaiting awaiting_ = Awaiting::none;
  std::uint64_t leaked_ = 0;
  std::vector<std::uint32_t> flips_;
};

struct CascadeOutcome {
  Bits corrected;
  std::uint64_t leaked_bits = 0;
  std::vector<std::uint32_t> flips;
  std::uint64_t rounds = 0;
};

/// Runs Bob's corrector against any parity oracle (a transport round trip,
/// or a local responder).
inline CascadeOutcome cascade_reconcile(const Bits& key_b, std::uint64_t seed, const CascadeSchedule& schedule,
                                        const std::function<ParityResponse(const ParityRequest&)>& exchange) {
  CascadeCorrector bob(key_b, seed, schedule);
  CascadeOutcome out;
  while (auto req = bob.next_request()) {
    bob.on_response(exchange(*req));
    ++out.rounds;
  }
  out.corrected = bob.key();
  out.leaked_bits = bob.leaked();
  out.flips = bob.flips();
  return out;
}

/// In-memory run with both keys at hand.
inline CascadeOutcome cascade_reconcile(const Bits& key_a, const Bits& key_b, double q_estimate,
                                        std::uint32_t cap = 8192, std::uint8_t passes = 4, std::uint64_t seed = 1) {
  if (key_a.size() != key_b.size()) throw std::invalid_argument("cascade_reconcile: length mismatch");
  const CascadeSchedule schedule{first_block_size(q_estimate, cap), passes, cap};
  CascadeResponder alice(key_a, seed, schedule);
  return cascade_reconcile(key_b, seed, schedule, [&](const ParityRequest& r) { return alice.answer(r); });
}

}  // namespace qkdlink::distill
