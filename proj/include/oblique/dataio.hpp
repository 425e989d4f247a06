#ifndef OBLIQUE_DATAIO_HPP
#define OBLIQUE_DATAIO_HPP

#include <iosfwd>
#include <optional>
#include <string>

#include "oblique/rng.hpp"
#include "oblique/types.hpp"

namespace oblique {

struct Dataset {
  Matrix x;
  std::optional<Vector> y;
  std::string name;
  std::string provenance;
};

enum class StandardizeTarget { Columns, Response, Both };

/// Dense numeric CSV: optional single header row, '.' decimal separator,
/// equal-arity rows. response_column (0-based) splits that column into y.
Dataset load_matrix_csv(const std::string& path, bool has_header,
                        std::optional<Index> response_column = std::nullopt);

/// 17-significant-digit decimal, newline-terminated rows; round-trips exactly.
void write_matrix_csv(std::ostream& os, const Matrix& m);
void write_matrix_csv(const std::string& path, const Matrix& m);

/// Zero mean, unit sample standard deviation per targeted column.
Dataset standardize(const Dataset& ds, StandardizeTarget target);

/// i.i.d. standard normal entries; y = X beta0 + noise with beta0 drawn from
/// the same stream and recorded in provenance.
Dataset synth_gaussian(Index n, Index p, Rng& rng, double noise_std = 1.0);

/// First `spike` rows scaled by sqrt(n) so leverage concentrates on them.
Dataset synth_coherent(Index n, Index p, Index spike, Rng& rng,
                       double noise_std = 1.0);

/// Row i scaled by (i+1)^-exponent; exponent = 0 reproduces synth_gaussian
/// on the same seed path.
Dataset synth_powerlaw_rows(Index n, Index p, double exponent, Rng& rng,
                            double noise_std = 1.0);

}  // namespace oblique

#endif  // OBLIQUE_DATAIO_HPP
