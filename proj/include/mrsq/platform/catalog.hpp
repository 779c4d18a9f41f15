#pragma once

// Basis-set catalog: built-in simulated sets rendered for the acquisition at
// hand, plus fixed sets loaded from native basis files.

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "mrsq/io/native.hpp"
#include "mrsq/io/select.hpp"
#include "mrsq/synthetic.hpp"

namespace mrsq::platform {

struct CatalogEntry {
  std::string id;
  BasisTags tags;
  std::vector<std::string> metabolites;
  std::optional<BasisSet> fixed;  // loaded sets are used as-is
};

class BasisCatalog {
 public:
  /// Simulated 17-metabolite sets for common protocols.
  void add_builtin() {
    const auto all = synthetic::default_metabolites();
    add({"sim-3T-PRESS-TE35", {3.0, "PRESS", 35.0}, all, std::nullopt});
    add({"sim-3T-PRESS-TE144", {3.0, "PRESS", 144.0}, all, std::nullopt});
    add({"sim-1.5T-PRESS-TE35", {1.5, "PRESS", 35.0}, all, std::nullopt});
    add({"sim-3T-STEAM-TE20", {3.0, "STEAM", 20.0}, all, std::nullopt});
  }

  void add(CatalogEntry e) {
    std::lock_guard lock(mu_);
    for (const auto& o : entries_)
      if (o.id == e.id) throw ConfigError("duplicate basis id '" + e.id + "'");
    entries_.push_back(std::move(e));
  }

  /// Adds every *.json native basis file in `dir`; the set name is the id.
  void load_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) return;
    std::vector<std::filesystem::path> files;
    for (const auto& f : std::filesystem::directory_iterator(dir))
      if (f.path().extension() == ".json") files.push_back(f.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream in(f, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      BasisSet b = io::parse_basis(ss.str());
      add({b.name, b.tags, b.names(), b});
    }
  }

  std::vector<CatalogEntry> entries() const {
    std::lock_guard lock(mu_);
    return entries_;
  }

  json list() const {
    json out = json::array();
    for (const auto& e : entries())
      out.push_back({{"id", e.id},
                     {"field_strength", e.tags.field_strength},
                     {"sequence", e.tags.sequence},
                     {"echo_time", e.tags.echo_time},
                     {"metabolites", e.metabolites},
                     {"source", e.fixed ? "file" : "simulated"}});
    return out;
  }

  /// Resolves "auto" (or empty) by acquisition tags, otherwise by id, and
  /// returns the set sampled for `acq`.
  BasisSet resolve(const AcquisitionParams& acq, const std::string& choice) const {
    const auto all = entries();
    std::vector<BasisSet> headers;
    for (const auto& e : all) {
      BasisSet h;
      h.name = e.id;
      h.tags = e.tags;
      headers.push_back(h);
    }
    std::optional<std::string> name;
    if (!choice.empty() && choice != "auto") name = choice;
    const BasisSet& pick = io::select_basis(headers, acq, name);
    const auto& entry = *std::find_if(all.begin(), all.end(), [&](const auto& e) { return e.id == pick.name; });
    if (entry.fixed) {
      const BasisSet& b = *entry.fixed;
      if (b.length() != acq.num_points || std::abs(b.spectral_width - acq.spectral_width) > 1e-9 * acq.spectral_width)
        throw SelectionError("basis set '" + b.name + "' does not match the acquisition (" +
                             std::to_string(b.length()) + " points at " + std::to_string(b.spectral_width) + " Hz)");
      return b;
    }
    const auto key = fmt::format("{}|{}|{}|{}", entry.id, acq.num_points, acq.spectral_width, acq.transmitter_freq);
    std::lock_guard lock(mu_);
    if (auto it = rendered_.find(key); it != rendered_.end()) return it->second;
    BasisSet b = synthetic::make_basis(entry.metabolites, acq, entry.id);
    b.tags = entry.tags;
    rendered_.emplace(key, b);
    return b;
  }

 private:
  mutable std::mutex mu_;
  std::vector<CatalogEntry> entries_;
  mutable std::map<std::string, BasisSet> rendered_;
};

}  // namespace mrsq::platform
