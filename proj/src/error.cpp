// SPDX-License-Identifier: Apache-2.0
#include "reskmd/error.hpp"

namespace reskmd {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Ordering: return "ordering";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Rank: return "rank";
    case ErrorKind::DegenerateWindow: return "degenerate-window";
    case ErrorKind::DegenerateEigenfunction: return "degenerate-eigenfunction";
    case ErrorKind::NumericalInconsistency: return "numerical-inconsistency";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace reskmd
