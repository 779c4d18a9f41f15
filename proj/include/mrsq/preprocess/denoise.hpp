#pragma once

// Denoising stage. Engines are looked up by name so a learned model can be
// registered next to the default rank-reduction engine.

#include <functional>
#include <map>
#include <mutex>
#include <shared_mutex>

#include "mrsq/preprocess/hsvd.hpp"
#include "mrsq/signal/snr.hpp"

namespace mrsq::preprocess {

struct DenoiseConfig {
  std::string engine = "hsvd";
  std::size_t rank = 25;
  std::size_t hankel_rows = 0;  // 0 = N/2

  HsvdConfig hsvd() const {
    HsvdConfig h;
    h.rank = rank;
    h.hankel_rows = hankel_rows;
    return h;
  }
};

using DenoiseEngine = std::function<Spectrum(const Spectrum&, const DenoiseConfig&)>;

namespace detail {

inline Spectrum hsvd_engine(const Spectrum& in, const DenoiseConfig& cfg) {
  validate(cfg.hsvd(), in.fid.size());
  Spectrum out = in;
  if (std::all_of(in.fid.begin(), in.fid.end(), [](Complex z) { return z == Complex{}; }))
    return out;
  const auto modes = hsvd_components(in.fid, in.acq.dwell_time(), cfg.hsvd());
  out.fid = reconstruct(modes, in.fid.size());
  // Keep the SNR contract: never hand back a spectrum that measures worse.
  try {
    if (snr_estimate(out).raw < snr_estimate(in).raw) return in;
  } catch (const Error&) {
    // Windows unavailable or degenerate noise (noiseless input): nothing to compare.
  }
  return out;
}

class EngineRegistry {
 public:
  static EngineRegistry& instance() {
    static EngineRegistry r;
    return r;
  }

  void add(std::string name, DenoiseEngine fn) {
    std::unique_lock lock(mu_);
    engines_[std::move(name)] = std::move(fn);
  }

  DenoiseEngine find(const std::string& name) const {
    std::shared_lock lock(mu_);
    auto it = engines_.find(name);
    if (it == engines_.end()) throw ConfigError("unknown denoise engine '" + name + "'");
    return it->second;
  }

 private:
  EngineRegistry() {
    engines_["hsvd"] = hsvd_engine;
    engines_["passthrough"] = [](const Spectrum& s, const DenoiseConfig&) { return s; };
  }
  mutable std::shared_mutex mu_;
  std::map<std::string, DenoiseEngine> engines_;
};

}  // namespace detail

inline void register_denoise_engine(std::string name, DenoiseEngine fn) {
  detail::EngineRegistry::instance().add(std::move(name), std::move(fn));
}

/// Returns a denoised copy with identical length, acquisition parameters and metadata.
inline Spectrum denoise(const Spectrum& s, const DenoiseConfig& cfg = {}) {
  s.validate();
  const auto engine = detail::EngineRegistry::instance().find(cfg.engine);
  Spectrum out = engine(s, cfg);
  out.acq = s.acq;
  out.meta = s.meta;
  if (out.fid.size() != s.fid.size()) throw Error("denoise engine changed the signal length");
  return out;
}

}  // namespace mrsq::preprocess
