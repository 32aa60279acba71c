#pragma once

#include <cstdio>
#include <ostream>
#include <string>

#include "tempest/ensemble.hpp"

namespace tempest {

/// 17 significant digits: every double round-trips exactly through its
/// decimal form, which is what makes re-runs byte-identical and CSVs
/// loss-free to re-parse.
inline std::string format_csv(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Ensemble snapshot rows under the header `t,particle_index,w,u_1,...,u_L`.
inline void write_snapshot_header(std::ostream& os, int dim) {
  os << "t,particle_index,w";
  for (int d = 1; d <= dim; ++d) {
    os << ",u_" << d;
  }
  os << "\n";
}

inline void write_snapshot_rows(std::ostream& os, const WeightedEnsemble& e) {
  const std::vector<double> w = e.weights();
  for (int n = 0; n < e.size(); ++n) {
    os << format_csv(e.t()) << ',' << n << ',' << format_csv(w[n]);
    for (int d = 0; d < e.dim(); ++d) {
      os << ',' << format_csv(e.particles()[n][d]);
    }
    os << "\n";
  }
}

}  // namespace tempest
