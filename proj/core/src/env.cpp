#include "smartmask/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "smartmask/errors.hpp"
#include "smartmask/random.hpp"

namespace smartmask::env {

namespace {

constexpr std::size_t kMaxEmissionSamples = 2048;
constexpr int kMaxTruncationRetries = 32;

void add_droplets(BoxState& box, std::size_t bin, double count, double nucleus) {
  if (!(count > 0.0)) return;
  double& n = box.number[bin];
  const double total = n + count;
  box.nucleus[bin] = (n * box.nucleus[bin] + count * nucleus) / total;
  n = total;
}

void add_sub_detection(BoxState& box, double count, double nucleus) {
  if (!(count > 0.0)) return;
  const double total = box.sub_detection + count;
  box.sub_detection_nucleus =
      (box.sub_detection * box.sub_detection_nucleus + count * nucleus) / total;
  box.sub_detection = total;
}

// Sub-detection droplets sit at their nucleus floor.
double sub_detection_diameter(const BoxState& box) { return box.sub_detection_nucleus; }

double cube(double x) { return x * x * x; }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

void scale_box(BoxState& box, double factor) {
  for (double& n : box.number) n *= factor;
  box.sub_detection *= factor;
  box.mist_partners *= factor;
}

void age_partners(const BinGrid& grid, BoxState& box, const EnvParams& params, double dt) {
  if (!(box.mist_partners > 0.0)) return;
  const double lifetime = std::max(params.mist_partner_lifetime, 1e-9);
  const double aged = box.mist_partners * -std::expm1(-dt / lifetime);
  box.mist_partners -= aged;
  const auto fractions =
      lognormal_bin_fractions(grid, box.mist_partner_diameter, params.mist_gsd);
  // Mist is pure water: the below-range share evaporates away.
  for (std::size_t i = 0; i < grid.size(); ++i) add_droplets(box, i, aged * fractions[i], 0.0);
}

}  // namespace

BinGrid::BinGrid() : BinGrid(std::vector<double>{0.3, 0.5, 1.0, 2.5, 4.0, 10.0}) {}

BinGrid::BinGrid(std::vector<double> edges) : edges_(std::move(edges)) {
  if (edges_.size() < 2) throw ConfigError("bin grid needs at least two edges", "grid.edges");
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    if (!(edges_[i] > 0.0)) throw ConfigError("bin edges must be positive", "grid.edges");
    if (i > 0 && !(edges_[i] > edges_[i - 1])) {
      throw ConfigError("bin edges must be strictly increasing", "grid.edges");
    }
  }
  representative_.reserve(edges_.size() - 1);
  for (std::size_t i = 0; i + 1 < edges_.size(); ++i) {
    representative_.push_back(std::sqrt(edges_[i] * edges_[i + 1]));
  }
}

std::optional<std::size_t> BinGrid::bin_of(double diameter) const {
  if (diameter < edges_.front()) return std::nullopt;
  const auto it = std::upper_bound(edges_.begin(), edges_.end(), diameter);
  const auto index = static_cast<std::size_t>(std::distance(edges_.begin(), it));
  return std::min(index - 1, size() - 1);
}

double BoxState::total_number() const noexcept {
  return std::accumulate(number.begin(), number.end(), 0.0);
}

std::string_view to_string(EmissionKind kind) {
  switch (kind) {
    case EmissionKind::talk: return "talk";
    case EmissionKind::cough: return "cough";
    case EmissionKind::sneeze: return "sneeze";
    case EmissionKind::humidifier: return "humidifier";
    case EmissionKind::mist: return "mist";
  }
  return "unknown";
}

EmissionKind emission_kind_from_string(std::string_view name) {
  if (name == "talk") return EmissionKind::talk;
  if (name == "cough") return EmissionKind::cough;
  if (name == "sneeze") return EmissionKind::sneeze;
  if (name == "humidifier") return EmissionKind::humidifier;
  if (name == "mist") return EmissionKind::mist;
  throw ConfigError("unknown emission kind '" + std::string(name) + "'");
}

bool is_impulsive(EmissionKind kind) {
  return kind == EmissionKind::cough || kind == EmissionKind::sneeze;
}

EmissionEvent default_event(EmissionKind kind, double humidifier_rate) {
  EmissionEvent e;
  e.kind = kind;
  switch (kind) {
    case EmissionKind::sneeze:
      e.total_count = 40'000;
      e.median_diameter = 4.0;
      e.geometric_std_dev = 2.0;
      e.nucleus_diameter = 1.0;
      e.min_diameter = 0.5;
      e.max_diameter = 12.0;
      break;
    case EmissionKind::cough:
      e.total_count = 3'000;
      e.median_diameter = 2.0;
      e.geometric_std_dev = 1.8;
      e.nucleus_diameter = 1.0;
      break;
    case EmissionKind::talk:
      // 3,000 droplets over five minutes of speech.
      e.duration = 300.0;
      e.total_count = 3'000 / e.duration;
      e.median_diameter = 1.0;
      e.geometric_std_dev = 1.6;
      e.nucleus_diameter = 1.0;
      break;
    case EmissionKind::humidifier:
      e.total_count = humidifier_rate;
      e.median_diameter = 1.0;
      e.geometric_std_dev = 1.5;
      e.duration = 15.0;
      e.nucleus_diameter = 0.0;
      break;
    case EmissionKind::mist:
      e.median_diameter = 2.0;
      e.geometric_std_dev = 1.5;
      e.duration = 15.0;
      e.nucleus_diameter = 0.0;
      break;
  }
  return e;
}

EnvState make_env(const Geometry& geometry, std::uint64_t seed, const BinGrid& grid) {
  if (!(geometry.breathing_height_m > 0.0)) {
    throw ConfigError("must be positive", "geometry.breathing_height_m");
  }
  if (!(geometry.ground_height_m > 0.0)) {
    throw ConfigError("must be positive", "geometry.ground_height_m");
  }
  if (!(geometry.cross_section_m2 > 0.0)) {
    throw ConfigError("must be positive", "geometry.cross_section_m2");
  }
  if (!(geometry.relative_humidity >= 0.0 && geometry.relative_humidity <= 100.0)) {
    throw ConfigError("must be within [0, 100]", "geometry.relative_humidity");
  }
  EnvState env;
  env.grid = grid;
  env.rng_seed = seed;
  auto make_box = [&](double height) {
    BoxState box;
    box.number.assign(grid.size(), 0.0);
    box.nucleus.assign(grid.size(), 0.0);
    box.height_m = height;
    box.cross_section_m2 = geometry.cross_section_m2;
    box.temperature_c = geometry.temperature_c;
    box.relative_humidity = geometry.relative_humidity;
    return box;
  };
  env.breathing = make_box(geometry.breathing_height_m);
  env.ground = make_box(geometry.ground_height_m);
  return env;
}

double stokes_settling_velocity(double d_um, double rho, double gravity) {
  if (d_um < 0.0) throw DomainError("stokes_settling_velocity: negative diameter");
  if (!(rho > 0.0)) throw DomainError("stokes_settling_velocity: density must be positive");
  const double d_m = d_um * 1e-6;
  const double rho_si = rho * 1e3;  // g/cm3 -> kg/m3
  return rho_si * gravity * d_m * d_m / (18.0 * kAirViscosityPaS);
}

double evaporation_step(double d_um, double nucleus_um, double dt, double rh, double kappa0) {
  if (nucleus_um < 0.0) throw DomainError("evaporation_step: negative nucleus");
  if (d_um < nucleus_um) throw DomainError("evaporation_step: diameter below nucleus");
  if (!(dt > 0.0)) throw DomainError("evaporation_step: dt must be positive");
  if (!(rh >= 0.0 && rh <= 100.0)) throw DomainError("evaporation_step: rh outside [0, 100]");
  const double kappa = kappa0 * (1.0 - rh / 100.0);
  const double squared = std::max(d_um * d_um - kappa * dt, nucleus_um * nucleus_um);
  return std::min(d_um, std::sqrt(squared));
}

double coalesced_diameter(double d1_um, double d2_um) {
  if (d1_um < 0.0 || d2_um < 0.0) throw DomainError("coalesced_diameter: negative diameter");
  if (d2_um == 0.0) return d1_um;
  if (d1_um == 0.0) return d2_um;
  return std::cbrt(cube(d1_um) + cube(d2_um));
}

double number_to_mass(double n, double d_um, double rho) {
  if (n < 0.0 || d_um < 0.0) throw DomainError("number_to_mass: negative input");
  if (!(rho > 0.0)) throw DomainError("number_to_mass: density must be positive");
  // #/cm3 * um^3 * g/cm3 = 1e-12 g/cm3 = ug/m3
  return n * std::numbers::pi / 6.0 * cube(d_um) * rho;
}

std::vector<double> lognormal_bin_fractions(const BinGrid& grid, double median, double gsd) {
  std::vector<double> fractions(grid.size() + 1, 0.0);
  if (!(median > 0.0)) return fractions;
  const double log_gsd = std::log(std::max(gsd, 1.0 + 1e-12));
  auto cdf = [&](double d) { return normal_cdf(std::log(d / median) / log_gsd); };
  double previous = cdf(grid.lower(0));
  fractions[grid.size()] = previous;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double next = (i + 1 == grid.size()) ? 1.0 : cdf(grid.upper(i));
    fractions[i] = next - previous;
    previous = next;
  }
  return fractions;
}

EnvState apply_emission(const EnvState& env, const EmissionEvent& event, double dt) {
  if (!(dt > 0.0)) throw DomainError("apply_emission: dt must be positive");
  if (event.total_count < 0.0) throw ConfigError("must be non-negative", "event.total_count");
  if (event.duration < 0.0) throw ConfigError("must be non-negative", "event.duration");
  if (!(event.geometric_std_dev > 1.0)) {
    throw ConfigError("must exceed 1", "event.geometric_std_dev");
  }
  if (!(event.median_diameter > 0.0)) {
    throw ConfigError("must be positive", "event.median_diameter");
  }
  switch (event.kind) {
    case EmissionKind::talk:
    case EmissionKind::cough:
    case EmissionKind::sneeze:
    case EmissionKind::humidifier:
    case EmissionKind::mist:
      break;
    default:
      throw ConfigError("unknown emission kind", "event.kind");
  }

  const double count = is_impulsive(event.kind) ? event.total_count : event.total_count * dt;
  if (!(count > 0.0)) return env;

  EnvState next = env;
  DeterministicRng rng(env.rng_seed, ++next.emission_draws);
  const auto samples = static_cast<std::size_t>(
      std::clamp(std::ceil(count), 1.0, static_cast<double>(kMaxEmissionSamples)));
  const double weight = count / static_cast<double>(samples) / env.breathing.volume_cm3();
  const double log_median = std::log(event.median_diameter);
  const double log_gsd = std::log(event.geometric_std_dev);
  const double lo = event.min_diameter;
  const double hi = event.max_diameter > 0.0 ? event.max_diameter
                                             : std::numeric_limits<double>::infinity();

  const std::size_t bins = env.grid.size();
  std::vector<double> added(bins, 0.0);
  std::vector<double> added_nucleus(bins, 0.0);
  double sub_added = 0.0;
  double sub_nucleus = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double d = std::exp(log_median + log_gsd * rng.normal());
    for (int retry = 0; (d < lo || d > hi) && retry < kMaxTruncationRetries; ++retry) {
      d = std::exp(log_median + log_gsd * rng.normal());
    }
    d = std::clamp(d, lo, hi);
    // Droplets emitted smaller than the nominal nucleus are already dry.
    const double nucleus = std::min(event.nucleus_diameter, d);
    if (const auto bin = env.grid.bin_of(d)) {
      added[*bin] += weight;
      added_nucleus[*bin] += weight * nucleus;
    } else if (nucleus > 0.0) {
      sub_added += weight;
      sub_nucleus += weight * nucleus;
    }
  }
  for (std::size_t i = 0; i < bins; ++i) {
    if (added[i] > 0.0) add_droplets(next.breathing, i, added[i], added_nucleus[i] / added[i]);
  }
  if (sub_added > 0.0) add_sub_detection(next.breathing, sub_added, sub_nucleus / sub_added);
  return next;
}

void evaporate(const BinGrid& grid, BoxState& box, double dt, double kappa0) {
  const double rh = box.relative_humidity;
  if (!(kappa0 > 0.0) || rh >= 100.0) return;
  const std::size_t bins = grid.size();
  const std::vector<double> nucleus = box.nucleus;
  std::vector<double> outflow(bins, 0.0);
  for (std::size_t i = 0; i < bins; ++i) {
    if (!(box.number[i] > 0.0) || nucleus[i] >= grid.lower(i)) continue;
    const double d = grid.representative(i);
    const double shrunk = evaporation_step(d, std::min(nucleus[i], d), dt, rh, kappa0);
    const double width = grid.upper(i) * grid.upper(i) - grid.lower(i) * grid.lower(i);
    // Droplets are taken as uniform in d^2 within the bin, so the d^2-law
    // shifts a fixed share across the lower edge.
    const double fraction = std::min(1.0, (d * d - shrunk * shrunk) / width);
    outflow[i] = box.number[i] * fraction;
    box.number[i] *= (1.0 - fraction);
  }
  for (std::size_t i = 0; i < bins; ++i) {
    if (!(outflow[i] > 0.0)) continue;
    if (i > 0) {
      add_droplets(box, i - 1, outflow[i], nucleus[i]);
    } else if (nucleus[0] > 0.0) {
      add_sub_detection(box, outflow[0], nucleus[0]);
    }
  }
}

void coalesce_with_partners(const BinGrid& grid, BoxState& box, double coalescence_rate,
                            double dt) {
  const double partners = box.mist_partners;
  if (!(partners > 0.0) || !(coalescence_rate > 0.0)) return;
  const std::size_t bins = grid.size();
  if (bins < 2) return;

  // The top bin has nowhere to grow into and is left alone.
  const std::size_t sources = bins - 1;
  double candidates = box.sub_detection;
  for (std::size_t i = 0; i < sources; ++i) candidates += box.number[i];
  if (!(candidates > 0.0)) return;

  double fraction = std::min(1.0, coalescence_rate * partners * dt);
  fraction = std::min(fraction, partners / candidates);

  const double partner_volume = cube(box.mist_partner_diameter);
  std::vector<double> volumes(bins);
  for (std::size_t i = 0; i < bins; ++i) volumes[i] = cube(grid.representative(i));

  std::vector<double> gained(bins, 0.0);
  std::vector<double> gained_nucleus(bins, 0.0);
  double sub_retained = 0.0;

  auto deposit = [&](double count, double volume, double nucleus, double own_volume,
                     bool from_sub) {
    if (volume >= volumes[bins - 1]) {
      gained[bins - 1] += count;
      gained_nucleus[bins - 1] += count * nucleus;
      return;
    }
    if (volume < volumes[0]) {
      // Only reachable from the sub-detection pool: split between the pool
      // and the first bin.
      const double to_first = from_sub ? (volume - own_volume) / (volumes[0] - own_volume) : 1.0;
      gained[0] += count * to_first;
      gained_nucleus[0] += count * to_first * nucleus;
      sub_retained += count * (1.0 - to_first);
      return;
    }
    const auto upper = std::upper_bound(volumes.begin(), volumes.end(), volume);
    const auto k = static_cast<std::size_t>(std::distance(volumes.begin(), upper)) - 1;
    const double low_share = (volumes[k + 1] - volume) / (volumes[k + 1] - volumes[k]);
    gained[k] += count * low_share;
    gained_nucleus[k] += count * low_share * nucleus;
    gained[k + 1] += count * (1.0 - low_share);
    gained_nucleus[k + 1] += count * (1.0 - low_share) * nucleus;
  };

  double consumed = 0.0;
  const std::vector<double> nucleus = box.nucleus;
  for (std::size_t i = 0; i < sources; ++i) {
    const double moved = box.number[i] * fraction;
    if (!(moved > 0.0)) continue;
    box.number[i] -= moved;
    consumed += moved;
    deposit(moved, volumes[i] + partner_volume, nucleus[i], volumes[i], false);
  }
  if (box.sub_detection > 0.0) {
    const double moved = box.sub_detection * fraction;
    const double own = cube(sub_detection_diameter(box));
    box.sub_detection -= moved;
    consumed += moved;
    deposit(moved, own + partner_volume, box.sub_detection_nucleus, own, true);
    box.sub_detection += sub_retained;
  }
  for (std::size_t i = 0; i < bins; ++i) {
    if (gained[i] > 0.0) add_droplets(box, i, gained[i], gained_nucleus[i] / gained[i]);
  }
  box.mist_partners = std::max(0.0, partners - consumed);
}

void settle(const BinGrid& grid, BoxState& breathing, BoxState& ground, double rho,
            double gravity, double dt) {
  if (!(gravity > 0.0)) return;
  const double volume_ratio = breathing.volume_cm3() / ground.volume_cm3();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double v = stokes_settling_velocity(grid.representative(i), rho, gravity);
    const double leaving = breathing.number[i] * -std::expm1(-v / breathing.height_m * dt);
    const double deposited = ground.number[i] * -std::expm1(-v / ground.height_m * dt);
    breathing.number[i] -= leaving;
    ground.number[i] -= deposited;
    add_droplets(ground, i, leaving * volume_ratio, breathing.nucleus[i]);
  }
  if (breathing.sub_detection > 0.0 || ground.sub_detection > 0.0) {
    auto velocity = [&](const BoxState& box) {
      return stokes_settling_velocity(sub_detection_diameter(box), rho, gravity);
    };
    const double leaving = breathing.sub_detection *
                           -std::expm1(-velocity(breathing) / breathing.height_m * dt);
    const double deposited =
        ground.sub_detection * -std::expm1(-velocity(ground) / ground.height_m * dt);
    breathing.sub_detection -= leaving;
    ground.sub_detection -= deposited;
    add_sub_detection(ground, leaving * volume_ratio, breathing.sub_detection_nucleus);
  }
}

EnvState step(const EnvState& env, const std::optional<MistPlume>& plume, double dt,
              const EnvParams& params) {
  if (!(dt > 0.0) || dt > kMaxStep) {
    throw DomainError("step: dt must lie in (0, " + std::to_string(kMaxStep) + "]");
  }
  EnvState next = env;
  const BinGrid& grid = next.grid;

  evaporate(grid, next.breathing, dt, params.evaporation_constant);
  evaporate(grid, next.ground, dt, params.evaporation_constant);

  if (plume) {
    BoxState& box = next.breathing;
    const double injected = plume->droplet_rate_into_box * dt / box.volume_cm3();
    if (injected > 0.0) {
      const double total = box.mist_partners + injected;
      box.mist_partner_diameter =
          (box.mist_partners * box.mist_partner_diameter + injected * plume->droplet_diameter) /
          total;
      box.mist_partners = total;
    }
    coalesce_with_partners(grid, box, params.coalescence_rate, dt);
  }
  age_partners(grid, next.breathing, params, dt);
  if (plume && plume->push_away_rate > 0.0) {
    scale_box(next.breathing, std::exp(-plume->push_away_rate * dt));
  }

  settle(grid, next.breathing, next.ground, params.droplet_density, params.gravity, dt);
  next.sim_time += dt;
  return next;
}

double third_moment(const BinGrid& grid, const BoxState& box) {
  double sum = box.sub_detection * cube(sub_detection_diameter(box)) +
               box.mist_partners * cube(box.mist_partner_diameter);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    sum += box.number[i] * cube(grid.representative(i));
  }
  return sum;
}

}  // namespace smartmask::env
