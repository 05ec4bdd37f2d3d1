#pragma once

// Long-run behaviour (positive recurrence, null recurrence, transience) and
// polarity of the boundary point v. Catalog mechanisms are decided by comparing
// the power-law exponents of Phi / Psi near 0 and near infinity; general triplets
// fall back to the numerical divergence probe.

#include <string>
#include <vector>

#include "cbi/mechanism.hpp"

namespace cbi {

enum class LongRun { PositiveRecurrent, NullRecurrent, Transient, Undetermined };
enum class Polarity { Polar, NotPolar, Undetermined };
enum class Method { Analytic, Numeric };
enum class Decision { Yes, No, Undetermined };

std::string to_string(LongRun v);
std::string to_string(Polarity v);
std::string to_string(Method v);
std::string to_string(Decision v);

inline bool is_recurrent(LongRun v) { return v == LongRun::PositiveRecurrent || v == LongRun::NullRecurrent; }

struct Evidence {
  std::string criterion;
  Method method = Method::Analytic;
  std::string verdict;
};

struct Classification {
  Criticality criticality = Criticality::Critical;
  LongRun longrun = LongRun::Undetermined;
  Polarity boundary_polar = Polarity::Undetermined;
  double v = 0.0;
  double d = kInf;
  std::vector<Evidence> evidence;
  std::vector<std::string> notes;
};

// Relative tolerance for exponent and ratio comparisons on a boundary case.
inline constexpr double kBoundaryTol = 1e-12;

Decision positive_recurrence_test(const CBIModel& model, Classification* trail = nullptr);
LongRun recurrence_classify(const CBIModel& model, Classification* trail = nullptr);
Polarity polarity_classify(const CBIModel& model, Classification* trail = nullptr);
Classification classify(const CBIModel& model);

// Psi = d q^alpha, Phi = d' q^beta with alpha in (1,2], beta in (0,1).
Classification stable_family_classify(double alpha, double beta, double d, double dprime);

// For the conditioned subcritical CB (Phi = Psi' - Psi'(0+)):
//   int_0^1 dz / z exp(-int_z^1 (1 / (Psi'(0+) u) - 1 / Psi(u)) du)
// decided from the same exponent arithmetic; returns Yes when the integral diverges.
Decision conditioned_subcritical_recurrent(const BranchingMechanism& psi);

}  // namespace cbi
