#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gridsec {

/// Errors raised by parsers and validators. For text-format parsers the
/// message carries a "line L, column C" location.
class CaseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BusRecord {
  int id = 0;             // external bus identifier (as in the case file)
  double base_load = 0.0; // active power demand, p.u. on base_mva
};

struct BranchRecord {
  int id = 0;       // dense branch index, 0..m-1
  int from_bus = 0; // external bus id
  int to_bus = 0;   // external bus id
  double reactance = 0.0; // p.u., > 0
};

/// The physical network: buses, oriented branches, per-branch reactance and
/// the slack bus. Branch order is the measurement channel order everywhere
/// downstream.
struct GridCase {
  std::string case_name;
  double base_mva = 100.0;
  std::vector<BusRecord> buses;
  std::vector<BranchRecord> branches;
  int slack_bus = 0;

  int n_buses() const { return static_cast<int>(buses.size()); }
  int n_branches() const { return static_cast<int>(branches.size()); }
  /// State dimension with the slack angle removed.
  int n_states() const { return n_buses() - 1; }

  /// Dense index of an external bus id; throws CaseError if unknown.
  int bus_index(int bus_id) const;
  int slack_index() const { return bus_index(slack_bus); }
};

struct LoadProfile {
  std::vector<double> scale_factors; // all > 0, length >= 1

  int length() const { return static_cast<int>(scale_factors.size()); }
};

/// Checks all GridCase invariants (unique bus ids, valid endpoints,
/// positive reactances, connectivity, valid slack). Throws CaseError.
void validate(const GridCase& grid_case);

/// Parses the MATPOWER case text subset: mpc.baseMVA, mpc.bus, mpc.branch
/// numeric matrices with ';' row separators and '%' comments. Other
/// assignments (gen, gencost, ...) are ignored. Out-of-service branches
/// (status column 0) are dropped. The type-3 bus becomes the slack.
GridCase parse_matpower_case(std::string_view text,
                             const std::string& default_name = "case");

GridCase parse_json_case(const std::string& text);
std::string write_json_case(const GridCase& grid_case);

/// One positive scale factor per line; a single non-numeric header line is
/// tolerated. Throws on nonpositive factors or an empty file.
LoadProfile load_profile_csv(std::string_view text);
std::string write_profile_csv(const LoadProfile& profile);

/// Synthetic daily-shape profile: sinusoid around 1.0 plus uniform jitter,
/// clamped positive. Stand-in for utility load data.
LoadProfile synthetic_profile(int length, std::uint64_t seed,
                              double amplitude = 0.15, double jitter = 0.05);

}  // namespace gridsec
