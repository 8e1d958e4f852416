#pragma once

// Sectional aerosol model of the air column around the wearer.
//
// Two stacked well-mixed boxes share one diameter grid. The breathing box is
// sampled by the mask sensor, the ground box by the floor sensor. Each step
// applies evaporation, mist loading, push-away and gravitational settling.
//
// Units: diameters in um, number concentrations in #/cm3, heights in m,
// densities in g/cm3, times in s.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace smartmask::env {

inline constexpr double kAirViscosityPaS = 1.81e-5;
inline constexpr double kStandardGravity = 9.81;
inline constexpr double kMaxStep = 0.5;

class BinGrid {
 public:
  // Default edges: 0.3, 0.5, 1.0, 2.5, 4.0, 10.0 um.
  BinGrid();
  explicit BinGrid(std::vector<double> edges);

  std::size_t size() const noexcept { return edges_.size() - 1; }
  std::span<const double> edges() const noexcept { return edges_; }
  double lower(std::size_t bin) const { return edges_.at(bin); }
  double upper(std::size_t bin) const { return edges_.at(bin + 1); }
  // Geometric mean of the bin's edges.
  double representative(std::size_t bin) const { return representative_.at(bin); }
  std::span<const double> representatives() const noexcept { return representative_; }

  // Index of the bin containing `diameter` (lower edge inclusive). Diameters
  // below the grid return nullopt; diameters at or above the top edge map to
  // the top bin.
  std::optional<std::size_t> bin_of(double diameter) const;

  friend bool operator==(const BinGrid&, const BinGrid&) = default;

 private:
  std::vector<double> edges_;
  std::vector<double> representative_;
};

struct BoxState {
  std::vector<double> number;   // per bin, #/cm3
  std::vector<double> nucleus;  // per bin, um; 0 means the droplet vanishes
  // Droplets below the lowest edge that keep a non-volatile nucleus.
  double sub_detection = 0.0;
  double sub_detection_nucleus = 0.0;
  // Freshly generated mist droplets near the nozzle that are still available
  // as loading partners; they age into the binned population.
  double mist_partners = 0.0;
  double mist_partner_diameter = 0.0;
  double height_m = 1.0;
  double cross_section_m2 = 1.0;
  double temperature_c = 22.0;
  double relative_humidity = 50.0;

  double volume_cm3() const noexcept { return height_m * cross_section_m2 * 1e6; }
  double total_number() const noexcept;

  friend bool operator==(const BoxState&, const BoxState&) = default;
};

struct EnvState {
  BinGrid grid;
  BoxState breathing;
  BoxState ground;
  double sim_time = 0.0;
  std::uint64_t rng_seed = 0;
  // Number of emission draws taken so far; each draw gets its own stream.
  std::uint64_t emission_draws = 0;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

enum class EmissionKind { talk, cough, sneeze, humidifier, mist };

std::string_view to_string(EmissionKind kind);
// Throws ConfigError for unknown names.
EmissionKind emission_kind_from_string(std::string_view name);
// Impulsive kinds deposit `total_count` once; continuous kinds emit
// `total_count` droplets per second for `duration`.
bool is_impulsive(EmissionKind kind);

struct EmissionEvent {
  EmissionKind kind = EmissionKind::talk;
  double total_count = 0.0;
  double median_diameter = 1.0;
  double geometric_std_dev = 1.5;
  double duration = 0.0;
  double nucleus_diameter = 0.0;
  // Optional truncation of the sampled size range.
  double min_diameter = 0.0;
  double max_diameter = 0.0;  // 0 = unbounded
};

// Defaults per kind. `humidifier_rate` is the calibrated output of the
// humidifier in droplets per second.
EmissionEvent default_event(EmissionKind kind, double humidifier_rate = 0.0);

struct MistPlume {
  double droplet_rate_into_box = 0.0;  // #/s
  double droplet_diameter = 0.0;       // um
  double push_away_rate = 0.0;         // 1/s
};

struct EnvParams {
  double evaporation_constant = 0.08;  // kappa0, um^2/s at rh = 0
  double droplet_density = 1.0;        // g/cm3
  double gravity = kStandardGravity;   // 0 disables settling
  double coalescence_rate = 0.0;       // k_c, cm3/s
  double mist_gsd = 1.5;
  double mist_partner_lifetime = 1.0;  // s
};

struct Geometry {
  double breathing_height_m = 1.8;  // 0.3 to 2.1 m
  double ground_height_m = 0.3;     // 0 to 0.3 m
  double cross_section_m2 = 1.0;
  double temperature_c = 22.0;
  double relative_humidity = 50.0;
};

EnvState make_env(const Geometry& geometry = {}, std::uint64_t seed = 0,
                  const BinGrid& grid = BinGrid{});

// Stokes terminal velocity in m/s for diameter `d_um` and density `rho`
// (g/cm3). Throws DomainError for d < 0 or rho <= 0.
double stokes_settling_velocity(double d_um, double rho, double gravity = kStandardGravity);

// d^2-law shrinkage toward the nucleus floor. `kappa0` in um^2/s.
double evaporation_step(double d_um, double nucleus_um, double dt, double rh,
                        double kappa0 = 0.08);

// Diameter of the droplet formed by merging two droplets (volume additive).
double coalesced_diameter(double d1_um, double d2_um);

// Mass concentration in ug/m3 for `n` #/cm3 of diameter `d_um`.
double number_to_mass(double n, double d_um, double rho);

// Log-normal fraction of droplets falling into each bin; entry size()
// holds the fraction below the grid. Above-range mass goes to the top bin.
std::vector<double> lognormal_bin_fractions(const BinGrid& grid, double median,
                                            double gsd);

EnvState apply_emission(const EnvState& env, const EmissionEvent& event, double dt);

// Advances the environment by dt (0 < dt <= 0.5 s).
EnvState step(const EnvState& env, const std::optional<MistPlume>& plume, double dt,
              const EnvParams& params);

// Individual processes applied by step(), exposed for conservation checks.
void evaporate(const BinGrid& grid, BoxState& box, double dt, double kappa0);
// Merges a fraction min(1, k_c * M * dt) of the droplets below the top bin
// with mist partners; coalesced droplets are split between the two bins that
// bracket their volume so the third moment is preserved.
void coalesce_with_partners(const BinGrid& grid, BoxState& box, double coalescence_rate,
                            double dt);
void settle(const BinGrid& grid, BoxState& breathing, BoxState& ground, double rho,
            double gravity, double dt);

// Sum of n_i * d_i^3 over the bins plus the sub-detection pool and mist
// partners, um^3/cm3. Conserved by the loading process.
double third_moment(const BinGrid& grid, const BoxState& box);

}  // namespace smartmask::env
