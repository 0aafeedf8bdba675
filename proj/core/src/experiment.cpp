// Copyright 2026 The risfeel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "risfeel/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#ifndef RISFEEL_VERSION
#define RISFEEL_VERSION "unknown"
#endif

namespace risfeel {

namespace {

enum SeedStream : std::uint64_t {
  kChannel = 11,
  kDesign = 12,
  kData = 13,
  kSplit = 14,
  kTrain = 15,
};

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// dB values are printed with 12 significant digits so that dB -> linear ->
/// dB does not surface last-bit noise.
std::string format_db(double linear) {
  if (linear <= 0.0) return "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", linear_to_db(linear));
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& field, const std::string& text) {
  const std::string t = trim(text);
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(field, "expected a number, got '" + text + "'");
  }
  return v;
}

template <typename Int>
Int parse_integer(const std::string& field, const std::string& text) {
  const std::string t = trim(text);
  Int v{};
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(field, "expected an integer, got '" + text + "'");
  }
  return v;
}

Vec3 parse_vec3(const std::string& field, const std::string& text) {
  const auto parts = split_list(text);
  if (parts.size() != 3) throw ConfigError(field, "expected three comma-separated numbers");
  return {parse_double(field, parts[0]), parse_double(field, parts[1]),
          parse_double(field, parts[2])};
}

std::string format_vec3(const Vec3& v) {
  return format_double(v.x) + ", " + format_double(v.y) + ", " + format_double(v.z);
}

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& field, const std::string& text,
                const std::pair<const char*, Enum> (&names)[N]) {
  const std::string t = trim(text);
  for (const auto& [name, value] : names) {
    if (t == name) return value;
  }
  std::string allowed;
  for (const auto& [name, value] : names) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  throw ConfigError(field, "unknown value '" + t + "' (allowed: " + allowed + ")");
}

constexpr std::pair<const char*, ExperimentKind> kKinds[] = {
    {"train_curves", ExperimentKind::TrainCurves}, {"mse_vs_L", ExperimentKind::MseVsL},
    {"mse_vs_M", ExperimentKind::MseVsM},          {"discrete_bits", ExperimentKind::DiscreteBits},
    {"downlink_snr", ExperimentKind::DownlinkSnr}, {"oracle_check", ExperimentKind::OracleCheck},
};

constexpr std::pair<const char*, Backend> kBackends[] = {
    {"ideal", Backend::Ideal},
    {"csit_based", Backend::CsitBased},
    {"csit_free", Backend::CsitFree},
    {"no_ris", Backend::NoRis},
};

bool is_training(ExperimentKind k) {
  return k == ExperimentKind::TrainCurves || k == ExperimentKind::DownlinkSnr;
}

bool needs_sweep(ExperimentKind k) {
  return k == ExperimentKind::MseVsL || k == ExperimentKind::MseVsM ||
         k == ExperimentKind::DiscreteBits || k == ExperimentKind::DownlinkSnr;
}

/// Parse-time state for values whose storage depends on other keys.
struct Pending {
  double carrier_hz = kSpeedOfLight / kDefaultWavelength;
  double element_size_wavelengths = 0.1;
  bool local_epochs_set = false;
  std::string model = "logistic";
  int hidden = 32;
  std::string partition = "iid";
  int shards_per_device = 1;
  double snr_dl_db = std::numeric_limits<double>::infinity();
};

using Setter = std::function<void(ExperimentConfig&, Pending&, const std::string& field,
                                  const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto dbl = [](auto member) {
      return [member](ExperimentConfig& c, Pending&, const std::string& f, const std::string& v) {
        member(c) = parse_double(f, v);
      };
    };
    auto integer = [](auto member) {
      return [member](ExperimentConfig& c, Pending&, const std::string& f, const std::string& v) {
        member(c) = parse_integer<int>(f, v);
      };
    };

    t["experiment.kind"] = [](ExperimentConfig& c, Pending&, const std::string& f, const std::string& v) {
      c.kind = parse_enum(f, v, kKinds);
    };
    t["experiment.sweep"] = [](ExperimentConfig& c, Pending&, const std::string& f, const std::string& v) {
      c.sweep.clear();
      for (const auto& item : split_list(v)) c.sweep.push_back(parse_double(f, item));
    };
    t["experiment.trials"] = integer([](ExperimentConfig& c) -> int& { return c.trials; });
    t["experiment.seed"] = [](ExperimentConfig& c, Pending&, const std::string& f, const std::string& v) {
      c.seed = parse_integer<std::uint64_t>(f, v);
    };
    t["experiment.output"] = [](ExperimentConfig& c, Pending&, const std::string&, const std::string& v) {
      c.output = trim(v);
    };
    t["experiment.backends"] = [](ExperimentConfig& c, Pending&, const std::string& f, const std::string& v) {
      c.backends.clear();
      for (const auto& item : split_list(v)) c.backends.push_back(parse_enum(f, item, kBackends));
    };
    t["experiment.devices"] = integer([](ExperimentConfig& c) -> int& { return c.devices; });
    t["experiment.elements"] = integer([](ExperimentConfig& c) -> int& { return c.elements; });
    t["experiment.phase_bits"] = integer([](ExperimentConfig& c) -> int& { return c.phase_bits; });

    t["power.P0_db"] = [](ExperimentConfig& c, Pending&, const std::string& f, const std::string& v) {
      c.p0 = db_to_linear(parse_double(f, v));
    };
    t["power.sigma2_db"] = [](ExperimentConfig& c, Pending&, const std::string& f, const std::string& v) {
      c.sigma2 = db_to_linear(parse_double(f, v));
    };

    t["geometry.ps_position"] = [](ExperimentConfig& c, Pending&, const std::string& f, const std::string& v) {
      c.geometry.ps_position = parse_vec3(f, v);
    };
    t["geometry.ris_position"] = [](ExperimentConfig& c, Pending&, const std::string& f, const std::string& v) {
      c.geometry.ris_position = parse_vec3(f, v);
    };
    t["geometry.region_min"] = [](ExperimentConfig& c, Pending&, const std::string& f, const std::string& v) {
      c.geometry.device_region.lo = parse_vec3(f, v);
    };
    t["geometry.region_max"] = [](ExperimentConfig& c, Pending&, const std::string& f, const std::string& v) {
      c.geometry.device_region.hi = parse_vec3(f, v);
    };
    t["geometry.carrier_hz"] = [](ExperimentConfig&, Pending& p, const std::string& f, const std::string& v) {
      p.carrier_hz = parse_double(f, v);
    };
    t["geometry.element_size_wavelengths"] = [](ExperimentConfig&, Pending& p, const std::string& f,
                                                const std::string& v) {
      p.element_size_wavelengths = parse_double(f, v);
    };
    t["geometry.reflection_amplitude"] =
        dbl([](ExperimentConfig& c) -> double& { return c.geometry.ris_reflection_amplitude; });
    t["geometry.ps_gain_dbi"] = dbl([](ExperimentConfig& c) -> double& { return c.geometry.gains.ps_dbi; });
    t["geometry.ris_gain_dbi"] = dbl([](ExperimentConfig& c) -> double& { return c.geometry.gains.ris_dbi; });
    t["geometry.device_gain_dbi"] =
        dbl([](ExperimentConfig& c) -> double& { return c.geometry.gains.device_dbi; });

    t["pathloss.direct_exponent"] = dbl([](ExperimentConfig& c) -> double& { return c.pathloss.direct_exponent; });
    t["pathloss.ris_constant"] = dbl([](ExperimentConfig& c) -> double& { return c.pathloss.ris_constant; });
    t["pathloss.reference_power_db"] =
        dbl([](ExperimentConfig& c) -> double& { return c.pathloss.reference_power_db; });

    t["dc.epsilon"] = dbl([](ExperimentConfig& c) -> double& { return c.dc.epsilon; });
    t["dc.rho"] = dbl([](ExperimentConfig& c) -> double& { return c.dc.rho; });
    t["dc.max_iterations"] = integer([](ExperimentConfig& c) -> int& { return c.dc.i_max; });
    t["dc.sdp_tol"] = dbl([](ExperimentConfig& c) -> double& { return c.dc.sdp_tol; });
    t["dc.sdp_max_iter"] = integer([](ExperimentConfig& c) -> int& { return c.dc.sdp_max_iter; });
    t["dc.convergence_tol"] = dbl([](ExperimentConfig& c) -> double& { return c.dc.convergence_tol; });

    t["sdr.bisection_steps"] = integer([](ExperimentConfig& c) -> int& { return c.sdr.bisection_steps; });
    t["sdr.randomizations"] = integer([](ExperimentConfig& c) -> int& { return c.sdr.randomizations; });
    t["sdr.sdp_tol"] = dbl([](ExperimentConfig& c) -> double& { return c.sdr.sdp_tol; });
    t["sdr.sdp_max_iter"] = integer([](ExperimentConfig& c) -> int& { return c.sdr.sdp_max_iter; });

    t["training.rounds"] = integer([](ExperimentConfig& c) -> int& { return c.training.rounds; });
    t["training.local_epochs"] = [](ExperimentConfig& c, Pending& p, const std::string& f, const std::string& v) {
      c.training.local_epochs = parse_integer<int>(f, v);
      p.local_epochs_set = true;
    };
    t["training.minibatches"] = integer([](ExperimentConfig& c) -> int& { return c.training.minibatches; });
    t["training.learning_rate"] = dbl([](ExperimentConfig& c) -> double& { return c.training.learning_rate; });
    t["training.model"] = [](ExperimentConfig&, Pending& p, const std::string&, const std::string& v) {
      p.model = trim(v);
    };
    t["training.hidden"] = [](ExperimentConfig&, Pending& p, const std::string& f, const std::string& v) {
      p.hidden = parse_integer<int>(f, v);
    };
    t["training.partition"] = [](ExperimentConfig&, Pending& p, const std::string&, const std::string& v) {
      p.partition = trim(v);
    };
    t["training.shards_per_device"] = [](ExperimentConfig&, Pending& p, const std::string& f,
                                         const std::string& v) {
      p.shards_per_device = parse_integer<int>(f, v);
    };
    t["training.snr_dl_db"] = [](ExperimentConfig&, Pending& p, const std::string& f, const std::string& v) {
      p.snr_dl_db = parse_double(f, v);
    };
    t["training.channel_refresh_every"] =
        integer([](ExperimentConfig& c) -> int& { return c.training.channel_refresh_every; });

    t["data.source"] = [](ExperimentConfig& c, Pending&, const std::string& f, const std::string& v) {
      constexpr std::pair<const char*, DataConfig::Source> names[] = {
          {"blobs", DataConfig::Source::Blobs}, {"csv", DataConfig::Source::Csv}};
      c.data.source = parse_enum(f, v, names);
    };
    t["data.path"] = [](ExperimentConfig& c, Pending&, const std::string&, const std::string& v) {
      c.data.csv_path = trim(v);
    };
    t["data.classes"] = integer([](ExperimentConfig& c) -> int& { return c.data.blobs.classes; });
    t["data.features"] = integer([](ExperimentConfig& c) -> int& { return c.data.blobs.features; });
    t["data.samples_per_class"] =
        integer([](ExperimentConfig& c) -> int& { return c.data.blobs.samples_per_class; });
    t["data.separation"] = dbl([](ExperimentConfig& c) -> double& { return c.data.blobs.separation; });
    t["data.test_fraction"] = dbl([](ExperimentConfig& c) -> double& { return c.data.test_fraction; });
    return t;
  }();
  return table;
}

void finish(ExperimentConfig& cfg, const Pending& p) {
  if (!(p.carrier_hz > 0.0)) throw ConfigError("geometry.carrier_hz", "must be positive");
  cfg.geometry.carrier_wavelength = kSpeedOfLight / p.carrier_hz;
  cfg.geometry.ris_element_size = p.element_size_wavelengths * cfg.geometry.carrier_wavelength;

  if (p.model == "logistic") {
    cfg.training.model = LogisticSpec{};
  } else if (p.model == "mlp") {
    cfg.training.model = MlpSpec{p.hidden};
  } else {
    throw ConfigError("training.model", "unknown value '" + p.model + "' (allowed: logistic, mlp)");
  }
  if (p.partition == "iid") {
    cfg.training.partition = IidPartition{};
  } else if (p.partition == "label_shards") {
    cfg.training.partition = LabelShardPartition{p.shards_per_device};
  } else {
    throw ConfigError("training.partition",
                      "unknown value '" + p.partition + "' (allowed: iid, label_shards)");
  }
  if (!p.local_epochs_set) {
    cfg.training.local_epochs = std::holds_alternative<IidPartition>(cfg.training.partition) ? 5 : 1;
  }
  if (std::isnan(p.snr_dl_db)) throw ConfigError("training.snr_dl_db", "must not be nan");
  cfg.training.downlink_noise_variance =
      std::isinf(p.snr_dl_db) && p.snr_dl_db > 0 ? 0.0 : 1.0 / db_to_linear(p.snr_dl_db);
}

/// Wraps library validation errors with the section they belong to.
template <typename F>
void validate_section(const std::string& section, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(section, e.what());
  }
}

}  // namespace

const char* to_string(ExperimentKind k) {
  for (const auto& [name, value] : kKinds) {
    if (value == k) return name;
  }
  return "unknown";
}

const char* to_string(Backend b) {
  for (const auto& [name, value] : kBackends) {
    if (value == b) return name;
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw ConfigError("experiment.trials", "must be >= 1");
  if (needs_sweep(kind) && sweep.empty()) {
    throw ConfigError("experiment.sweep", std::string("required for ") + to_string(kind));
  }
  if (backends.empty()) throw ConfigError("experiment.backends", "must list at least one backend");
  if (devices < 1) throw ConfigError("experiment.devices", "must be >= 1");
  if (elements < 0) throw ConfigError("experiment.elements", "must be >= 0");
  if (phase_bits < 0) throw ConfigError("experiment.phase_bits", "must be >= 0");
  for (double s : sweep) {
    const bool integral = s == std::floor(s);
    if ((kind == ExperimentKind::MseVsL || kind == ExperimentKind::DiscreteBits) &&
        (!integral || s < 0)) {
      throw ConfigError("experiment.sweep", "values must be non-negative integers");
    }
    if (kind == ExperimentKind::MseVsM && (!integral || s < 1)) {
      throw ConfigError("experiment.sweep", "values must be positive integers");
    }
    if (kind == ExperimentKind::TrainCurves && (!integral || s < 0)) {
      throw ConfigError("experiment.sweep", "values must be non-negative integers (RIS elements)");
    }
    if (kind == ExperimentKind::DownlinkSnr && std::isnan(s)) {
      throw ConfigError("experiment.sweep", "SNR values must not be nan");
    }
  }
  if (kind == ExperimentKind::OracleCheck && (elements < 1 || elements > 4)) {
    throw ConfigError("experiment.elements", "oracle_check enumerates a grid; needs 1..4 elements");
  }
  if (!(p0 > 0.0)) throw ConfigError("power.P0_db", "must be finite");
  if (!(sigma2 >= 0.0)) throw ConfigError("power.sigma2_db", "must not be nan");
  validate_section("geometry", [&] { geometry.validate(); });
  validate_section("pathloss", [&] { pathloss.validate(); });
  validate_section("dc", [&] { dc.validate(); });
  if (sdr.bisection_steps < 1) throw ConfigError("sdr.bisection_steps", "must be >= 1");
  if (sdr.randomizations < 0) throw ConfigError("sdr.randomizations", "must be >= 0");
  if (!(sdr.sdp_tol > 0.0)) throw ConfigError("sdr.sdp_tol", "must be positive");
  if (sdr.sdp_max_iter < 1) throw ConfigError("sdr.sdp_max_iter", "must be >= 1");
  validate_section("training", [&] {
    TrainingConfig t = training;
    t.devices = devices;
    t.validate();
  });
  if (data.source == DataConfig::Source::Csv && data.csv_path.empty()) {
    throw ConfigError("data.path", "required when data.source = csv");
  }
  if (!(data.test_fraction > 0.0 && data.test_fraction < 1.0)) {
    throw ConfigError("data.test_fraction", "must be in (0, 1)");
  }
  if (data.blobs.classes < 2) throw ConfigError("data.classes", "must be >= 2");
  if (data.blobs.features < 1) throw ConfigError("data.features", "must be >= 1");
  if (data.blobs.samples_per_class < 1) throw ConfigError("data.samples_per_class", "must be >= 1");
}

AirSettings ExperimentConfig::air_settings() const {
  AirSettings s;
  s.p0 = p0;
  s.sigma2 = pathloss.to_reference(sigma2);
  s.dc = dc;
  s.sdr = sdr;
  s.phase_bits = phase_bits;
  return s;
}

ExperimentConfig parse_config_text(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("", std::string("malformed config: ") + e.message() + " (line " +
                              std::to_string(e.line()) + ")");
  }

  ExperimentConfig cfg;
  Pending pending;
  std::vector<std::string> unknown;
  const auto& table = setters();
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      unknown.push_back(section);
      continue;
    }
    for (const auto& [key, node] : body) {
      const std::string field = section + "." + key;
      const auto it = table.find(field);
      if (it == table.end()) {
        unknown.push_back(field);
        continue;
      }
      it->second(cfg, pending, field, node.data());
    }
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
    throw ConfigError(unknown.front(), "unknown keys: " + list);
  }
  finish(cfg, pending);
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string print_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  std::string backends;
  for (Backend b : cfg.backends) backends += (backends.empty() ? "" : ", ") + std::string(to_string(b));
  std::string sweep;
  for (double s : cfg.sweep) sweep += (sweep.empty() ? "" : ", ") + format_double(s);

  os << "[experiment]\n"
     << "kind = " << to_string(cfg.kind) << "\n"
     << "sweep = " << sweep << "\n"
     << "trials = " << cfg.trials << "\n"
     << "seed = " << cfg.seed << "\n"
     << "output = " << cfg.output << "\n"
     << "backends = " << backends << "\n"
     << "devices = " << cfg.devices << "\n"
     << "elements = " << cfg.elements << "\n"
     << "phase_bits = " << cfg.phase_bits << "\n\n";

  os << "[power]\n"
     << "P0_db = " << format_db(cfg.p0) << "\n"
     << "sigma2_db = " << format_db(cfg.sigma2) << "\n\n";

  const auto& g = cfg.geometry;
  os << "[geometry]\n"
     << "ps_position = " << format_vec3(g.ps_position) << "\n"
     << "ris_position = " << format_vec3(g.ris_position) << "\n"
     << "region_min = " << format_vec3(g.device_region.lo) << "\n"
     << "region_max = " << format_vec3(g.device_region.hi) << "\n"
     << "carrier_hz = " << format_double(kSpeedOfLight / g.carrier_wavelength) << "\n"
     << "element_size_wavelengths = " << format_double(g.ris_element_size / g.carrier_wavelength) << "\n"
     << "reflection_amplitude = " << format_double(g.ris_reflection_amplitude) << "\n"
     << "ps_gain_dbi = " << format_double(g.gains.ps_dbi) << "\n"
     << "ris_gain_dbi = " << format_double(g.gains.ris_dbi) << "\n"
     << "device_gain_dbi = " << format_double(g.gains.device_dbi) << "\n\n";

  os << "[pathloss]\n"
     << "direct_exponent = " << format_double(cfg.pathloss.direct_exponent) << "\n"
     << "ris_constant = " << format_double(cfg.pathloss.ris_constant) << "\n"
     << "reference_power_db = " << format_double(cfg.pathloss.reference_power_db) << "\n\n";

  os << "[dc]\n"
     << "epsilon = " << format_double(cfg.dc.epsilon) << "\n"
     << "rho = " << format_double(cfg.dc.rho) << "\n"
     << "max_iterations = " << cfg.dc.i_max << "\n"
     << "sdp_tol = " << format_double(cfg.dc.sdp_tol) << "\n"
     << "sdp_max_iter = " << cfg.dc.sdp_max_iter << "\n"
     << "convergence_tol = " << format_double(cfg.dc.convergence_tol) << "\n\n";

  os << "[sdr]\n"
     << "bisection_steps = " << cfg.sdr.bisection_steps << "\n"
     << "randomizations = " << cfg.sdr.randomizations << "\n"
     << "sdp_tol = " << format_double(cfg.sdr.sdp_tol) << "\n"
     << "sdp_max_iter = " << cfg.sdr.sdp_max_iter << "\n\n";

  const auto& t = cfg.training;
  const auto* mlp = std::get_if<MlpSpec>(&t.model);
  const auto* shards = std::get_if<LabelShardPartition>(&t.partition);
  os << "[training]\n"
     << "rounds = " << t.rounds << "\n"
     << "local_epochs = " << t.local_epochs << "\n"
     << "minibatches = " << t.minibatches << "\n"
     << "learning_rate = " << format_double(t.learning_rate) << "\n"
     << "model = " << (mlp ? "mlp" : "logistic") << "\n"
     << "hidden = " << (mlp ? mlp->hidden : MlpSpec{}.hidden) << "\n"
     << "partition = " << (shards ? "label_shards" : "iid") << "\n"
     << "shards_per_device = " << (shards ? shards->shards_per_device : 1) << "\n"
     << "snr_dl_db = "
     << (t.downlink_noise_variance > 0.0 ? format_db(1.0 / t.downlink_noise_variance) : "inf") << "\n"
     << "channel_refresh_every = " << t.channel_refresh_every << "\n\n";

  const auto& d = cfg.data;
  os << "[data]\n"
     << "source = " << (d.source == DataConfig::Source::Csv ? "csv" : "blobs") << "\n"
     << "path = " << d.csv_path << "\n"
     << "classes = " << d.blobs.classes << "\n"
     << "features = " << d.blobs.features << "\n"
     << "samples_per_class = " << d.blobs.samples_per_class << "\n"
     << "separation = " << format_double(d.blobs.separation) << "\n"
     << "test_fraction = " << format_double(d.test_fraction) << "\n";
  return os.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : print_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void ResultTable::write_csv(std::ostream& os) const {
  const bool has_round =
      std::any_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.round >= 0; });
  os << "experiment,seed,sweep,backend,trial";
  if (has_round) os << ",round";
  for (const auto& c : columns) os << "," << c;
  os << "\n";
  for (const auto& r : rows) {
    os << experiment << "," << seed << "," << format_double(r.sweep) << "," << to_string(r.backend)
       << ",";
    if (r.trial == -1) {
      os << "mean";
    } else if (r.trial == -2) {
      os << "std";
    } else {
      os << r.trial;
    }
    if (has_round) os << "," << r.round;
    for (double v : r.values) os << "," << format_double(v);
    os << "\n";
  }
}

double ResultTable::value(const ResultRow& row, const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  require(it != columns.end(), "ResultTable: no column " + name);
  return row.values[static_cast<std::size_t>(it - columns.begin())];
}

std::optional<double> grid_oracle_gain(const ChannelRealization& chan, const AggregationWeights& w,
                                       double p0, double epsilon, int levels) {
  const Eigen::Index m_dev = chan.devices();
  const Eigen::Index l = chan.elements();
  require(levels >= 1, "grid_oracle_gain: levels must be >= 1");
  require(w.size() == m_dev, "grid_oracle_gain: weight count mismatch");
  require(std::pow(static_cast<double>(levels), static_cast<double>(l)) <= 1 << 26,
          "grid_oracle_gain: grid too large");

  CVector alphabet(levels);
  for (int i = 0; i < levels; ++i) {
    alphabet(i) = std::polar(1.0, 2.0 * std::numbers::pi * i / levels);
  }
  const RVector q = -w.values() / std::sqrt(p0);
  const double qn = q.squaredNorm();

  std::vector<int> idx(static_cast<std::size_t>(l), 0);
  CVector theta = CVector::Constant(l, alphabet(0));
  std::optional<double> best;
  while (true) {
    const CVector a = effective_channel(chan, theta);
    const Complex cstar = -(q.cast<Complex>().dot(a)) / qn;
    const double rmin = a.squaredNorm() - qn * std::norm(cstar);
    if (rmin <= epsilon) {
      const double r = std::abs(cstar) + std::sqrt((epsilon - rmin) / qn);
      if (!best || r * r > *best) best = r * r;
    }
    Eigen::Index k = 0;
    for (; k < l; ++k) {
      auto& i = idx[static_cast<std::size_t>(k)];
      if (++i < levels) {
        theta(k) = alphabet(i);
        break;
      }
      i = 0;
      theta(k) = alphabet(0);
    }
    if (k == l) break;
  }
  return best;
}

namespace {

struct Job {
  std::size_t sweep_index = 0;
  std::size_t backend_index = 0;
  int trial = 0;
};

AirScheme scheme_of(Backend b) {
  switch (b) {
    case Backend::CsitBased: return AirScheme::CsitBased;
    case Backend::CsitFree: return AirScheme::CsitFree;
    case Backend::NoRis: return AirScheme::NoRis;
    case Backend::Ideal: break;
  }
  throw Error("ideal aggregation has no air-interface design");
}

Dataset load_data(const ExperimentConfig& cfg, int trial) {
  if (cfg.data.source == DataConfig::Source::Csv) return load_csv(cfg.data.csv_path);
  BlobConfig blobs = cfg.data.blobs;
  blobs.seed = derive_seed(cfg.seed, kData, static_cast<std::uint64_t>(trial));
  return make_blobs(blobs);
}

std::vector<std::string> columns_of(ExperimentKind kind) {
  if (is_training(kind)) return {"train_loss", "test_accuracy", "aggregation_mse", "feasible"};
  if (kind == ExperimentKind::OracleCheck) {
    return {"dc_c_abs2", "grid_c_abs2", "ratio", "feasible", "residual"};
  }
  return {"mse", "mse_db", "mismatch_mse", "noise_mse", "feasible", "residual", "c_abs2",
          "penalty_gap", "outer_iterations"};
}

std::vector<ResultRow> run_job(const ExperimentConfig& cfg, const Job& job, double sweep_value) {
  const Backend backend = cfg.backends[job.backend_index];
  const auto trial = static_cast<std::uint64_t>(job.trial);
  const auto sweep_int = static_cast<int>(sweep_value);
  const int m_dev = cfg.kind == ExperimentKind::MseVsM ? sweep_int : cfg.devices;
  const int l_el = cfg.kind == ExperimentKind::MseVsL || cfg.kind == ExperimentKind::TrainCurves
                       ? sweep_int
                       : cfg.elements;
  AirSettings settings = cfg.air_settings();
  if (cfg.kind == ExperimentKind::DiscreteBits) settings.phase_bits = sweep_int;
  settings.dc.seed = derive_seed(cfg.seed, kDesign, job.sweep_index, trial);
  settings.sdr.seed = settings.dc.seed;
  const std::uint64_t channel_seed = derive_seed(cfg.seed, kChannel, trial);

  std::vector<ResultRow> rows;
  auto row = [&](int round, std::vector<double> values) {
    rows.push_back(ResultRow{sweep_value, backend, job.trial, round, std::move(values)});
  };

  if (is_training(cfg.kind)) {
    const Dataset full = load_data(cfg, job.trial);
    auto [train, test] = train_test_split(full, cfg.data.test_fraction,
                                          derive_seed(cfg.seed, kSplit, trial));
    TrainingConfig tcfg = cfg.training;
    tcfg.devices = m_dev;
    tcfg.seed = derive_seed(cfg.seed, kTrain, trial);
    if (cfg.kind == ExperimentKind::DownlinkSnr) {
      tcfg.downlink_noise_variance =
          std::isinf(sweep_value) && sweep_value > 0 ? 0.0 : 1.0 / db_to_linear(sweep_value);
    }
    const FederatedTask task = make_task(train, test, tcfg);
    const ChannelProvider provider(cfg.geometry, cfg.pathloss, m_dev, l_el, channel_seed);
    std::unique_ptr<AggregatorBackend> agg;
    if (backend == Backend::Ideal) {
      agg = std::make_unique<IdealBackend>();
    } else {
      agg = std::make_unique<AirBackend>(scheme_of(backend), task.partition.weights, settings);
    }
    for (const auto& m : run_training(tcfg, task, *agg, &provider)) {
      row(m.round, {m.train_loss, m.test_accuracy, m.aggregation_mse, m.feasible ? 1.0 : 0.0});
    }
    return rows;
  }

  const ChannelRealization chan = sample_channel(cfg.geometry, cfg.pathloss, m_dev, l_el, channel_seed);
  const AggregationWeights w = AggregationWeights::uniform(m_dev);

  if (cfg.kind == ExperimentKind::OracleCheck) {
    const AirDesign d = design_air(AirScheme::CsitFree, chan, w, settings);
    const double dc_gain = std::norm(d.c);
    const auto grid = grid_oracle_gain(chan, w, settings.p0, settings.dc.epsilon, 64);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row(-1, {dc_gain, grid.value_or(nan), grid ? dc_gain / *grid : nan, d.feasible ? 1.0 : 0.0,
             alignment_residual(chan, d.theta, d.c, w, settings.p0)});
    return rows;
  }

  if (backend == Backend::Ideal) return rows;  // nothing to design
  const AirDesign d = design_air(scheme_of(backend), chan, w, settings);
  const ChannelRealization& used = backend == Backend::NoRis ? chan.without_ris() : chan;
  const double mse = d.report.total_mse_closed_form;
  row(-1, {mse, linear_to_db(mse), d.report.mismatch_mse, d.report.noise_mse, d.feasible ? 1.0 : 0.0,
           alignment_residual(used, d.theta, d.c, w, settings.p0), std::norm(d.c),
           backend == Backend::CsitFree ? d.dc.penalty_gap : 0.0,
           backend == Backend::CsitFree ? static_cast<double>(d.dc.outer_iterations) : 0.0});
  return rows;
}

void append_summaries(ResultTable& table) {
  struct Group {
    double sweep;
    Backend backend;
    int round;
    std::vector<const ResultRow*> members;
  };
  std::vector<Group> groups;
  for (const auto& r : table.rows) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.sweep == r.sweep && g.backend == r.backend && g.round == r.round;
    });
    if (it == groups.end()) {
      groups.push_back({r.sweep, r.backend, r.round, {}});
      it = groups.end() - 1;
    }
    it->members.push_back(&r);
  }
  std::vector<ResultRow> summary;
  for (const auto& g : groups) {
    const std::size_t width = table.columns.size();
    const auto n = static_cast<double>(g.members.size());
    ResultRow mean{g.sweep, g.backend, -1, g.round, std::vector<double>(width, 0.0)};
    ResultRow sd{g.sweep, g.backend, -2, g.round, std::vector<double>(width, 0.0)};
    for (std::size_t c = 0; c < width; ++c) {
      double s = 0.0;
      for (const auto* r : g.members) s += r->values[c];
      mean.values[c] = s / n;
      double v = 0.0;
      for (const auto* r : g.members) v += (r->values[c] - mean.values[c]) * (r->values[c] - mean.values[c]);
      sd.values[c] = g.members.size() > 1 ? std::sqrt(v / (n - 1.0)) : 0.0;
    }
    summary.push_back(std::move(mean));
    summary.push_back(std::move(sd));
  }
  table.rows.insert(table.rows.end(), summary.begin(), summary.end());
}

}  // namespace

ResultTable run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  std::vector<double> sweep = cfg.sweep;
  if (sweep.empty()) {
    sweep.push_back(cfg.kind == ExperimentKind::OracleCheck || cfg.kind == ExperimentKind::TrainCurves
                        ? static_cast<double>(cfg.elements)
                        : 0.0);
  }
  std::vector<Backend> backends = cfg.backends;
  if (cfg.kind == ExperimentKind::OracleCheck) backends = {Backend::CsitFree};
  ExperimentConfig effective = cfg;
  effective.backends = backends;

  std::vector<Job> jobs;
  for (std::size_t s = 0; s < sweep.size(); ++s) {
    for (std::size_t b = 0; b < backends.size(); ++b) {
      for (int t = 0; t < cfg.trials; ++t) jobs.push_back({s, b, t});
    }
  }

  std::vector<std::vector<ResultRow>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = run_job(effective, jobs[i], sweep[jobs[i].sweep_index]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
      if (opts.progress) {
        std::lock_guard lock(progress_mutex);
        opts.progress("job " + std::to_string(i + 1) + "/" + std::to_string(jobs.size()) +
                      " sweep=" + format_double(sweep[jobs[i].sweep_index]) +
                      " backend=" + to_string(backends[jobs[i].backend_index]) +
                      " trial=" + std::to_string(jobs[i].trial));
      }
    }
  };
  const int threads = std::max(1, std::min<int>(opts.threads, static_cast<int>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ResultTable table;
  table.experiment = to_string(cfg.kind);
  table.seed = cfg.seed;
  table.columns = columns_of(cfg.kind);
  for (auto& r : results) {
    for (auto& row : r) table.rows.push_back(std::move(row));
  }
  append_summaries(table);
  return table;
}

nlohmann::json run_manifest(const ExperimentConfig& cfg, const ResultTable& table) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  nlohmann::json backends = nlohmann::json::array();
  for (Backend b : cfg.backends) backends.push_back(to_string(b));
  return {
      {"experiment", table.experiment},
      {"config_hash", hash},
      {"seed", cfg.seed},
      {"trials", cfg.trials},
      {"sweep", cfg.sweep},
      {"backends", backends},
      {"rows", table.rows.size()},
      {"columns", table.columns},
      {"output", cfg.output},
      {"versions",
       {{"risfeel", RISFEEL_VERSION},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                      "." + std::to_string(EIGEN_MINOR_VERSION)},
        {"compiler", __VERSION__}}},
      {"config", print_config(cfg)},
  };
}

}  // namespace risfeel
