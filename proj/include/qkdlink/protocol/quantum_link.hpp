#pragma once

// The physical layer between the engines: Alice's transmitter (symbol
// stream plus a phase knob the stabilizer turns) and the fiber / receiver
// path that turns emitted slots into Bob's clicks.

#include "qkdlink/protocol/stabilizer.hpp"
#include "qkdlink/slot_model.hpp"
#include "qkdlink/transmitter.hpp"

#include <memory>
#include <mutex>
#include <vector>

namespace qkdlink::protocol {

class Transmitter {
 public:
  Transmitter(const EmissionConfig& config, std::uint64_t seed) : symbols_(seed, config), config_(config) {}

  const SymbolStream& symbols() const { return symbols_; }

  EmissionConfig snapshot() const {
    std::lock_guard lock(mutex_);
    return config_;
  }
  double phase() const {
    std::lock_guard lock(mutex_);
    return config_.phase_alice;
  }
  void set_phase(double phi) {
    std::lock_guard lock(mutex_);
    config_.phase_alice = wrap_phase(phi);
  }

 private:
  SymbolStream symbols_;
  mutable std::mutex mutex_;
  EmissionConfig config_;
};

class QuantumLink {
 public:
  QuantumLink(const LinkSpec& link, const Transmitter& tx, const DriftConfig& drift, std::uint64_t seed)
      : tx_(tx),
        model_(std::make_unique<SlotModel>(link)),
        receiver_(*model_, tx.snapshot(), derive_seed(seed, "receiver")),
        drift_(drift, derive_seed(seed, "drift")),
        rate_(tx.snapshot().qubit_rate_hz) {}

  /// Bob's clicks for slots [begin, end), both detectors merged in time
  /// order. The drift is sampled once at the chunk start.
  std::vector<DetectionEvent> acquire(std::uint64_t begin, std::uint64_t end) {
    return acquire_at(begin, end, static_cast<double>(begin) / rate_);
  }

  /// Same, with the drift sampled at an explicit environment time. Lets a
  /// long run space short acquisitions far apart on the drift clock.
  std::vector<DetectionEvent> acquire_at(std::uint64_t begin, std::uint64_t end, double t_s) {
    const auto emission = tx_.snapshot();
    last_drift_ = drift_.at(t_s);
    return receiver_.acquire(tx_.symbols(), emission, begin, end, last_drift_);
  }

  double last_drift() const { return last_drift_; }
  const SlotModel& model() const { return *model_; }

 private:
  const Transmitter& tx_;
  std::unique_ptr<SlotModel> model_;
  ReceiverProcess receiver_;
  PhaseDrift drift_;
  double rate_;
  double last_drift_ = 0.0;
};

}  // namespace qkdlink::protocol
