#include "oblique/dataio.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace oblique {

namespace {

double parse_cell(const std::string& cell, long row, long col) {
  const char* first = cell.data();
  const char* last = first + cell.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\t' ||
                          last[-1] == '\r')) --last;
  double value = 0.0;
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last || first == last) {
    throw CsvParseError("load_matrix_csv: non-numeric cell '" + cell +
                        "' at row " + std::to_string(row) + ", column " +
                        std::to_string(col),
                        row, col);
  }
  return value;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

Dataset load_matrix_csv(const std::string& path, bool has_header,
                        std::optional<Index> response_column) {
  std::ifstream in(path);
  if (!in) {
    throw CsvParseError("load_matrix_csv: cannot open '" + path + "'", 0, 0);
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  long lineno = 0;
  size_t arity = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && has_header) continue;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const auto cells = split_line(line);
    if (rows.empty()) {
      arity = cells.size();
    } else if (cells.size() != arity) {
      throw RaggedRowsError("load_matrix_csv: row " + std::to_string(lineno) +
                            " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(arity));
    }
    std::vector<double> parsed;
    parsed.reserve(cells.size());
    for (size_t c = 0; c < cells.size(); ++c) {
      parsed.push_back(
          parse_cell(cells[c], lineno, static_cast<long>(c) + 1));
    }
    rows.push_back(std::move(parsed));
  }
  if (rows.empty()) {
    throw CsvParseError("load_matrix_csv: no data rows in '" + path + "'", 0,
                        0);
  }

  const Index n = static_cast<Index>(rows.size());
  const Index total_cols = static_cast<Index>(arity);
  Dataset ds;
  ds.name = path;
  ds.provenance = "csv:" + path;
  if (response_column) {
    if (*response_column < 0 || *response_column >= total_cols) {
      throw CsvParseError("load_matrix_csv: response column out of range", 0,
                          *response_column + 1);
    }
    ds.x.resize(n, total_cols - 1);
    Vector y(n);
    for (Index i = 0; i < n; ++i) {
      Index k = 0;
      for (Index j = 0; j < total_cols; ++j) {
        const double v = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
        if (j == *response_column) {
          y(i) = v;
        } else {
          ds.x(i, k++) = v;
        }
      }
    }
    ds.y = std::move(y);
  } else {
    ds.x.resize(n, total_cols);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < total_cols; ++j) {
        ds.x(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
      }
    }
  }
  return ds;
}

void write_matrix_csv(std::ostream& os, const Matrix& m) {
  char buf[64];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      if (j > 0) os << ',';
      os << buf;
    }
    os << '\n';
  }
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) {
    throw Error("write_matrix_csv: cannot open '" + path + "'");
  }
  write_matrix_csv(out, m);
}

Dataset standardize(const Dataset& ds, StandardizeTarget target) {
  Dataset out = ds;
  auto standardize_column = [](Eigen::Ref<Vector> col, long col_id) {
    const double n = static_cast<double>(col.size());
    const double mean = col.mean();
    const double ss = (col.array() - mean).square().sum();
    if (col.size() < 2 || ss <= 0.0) {
      throw ZeroVarianceError(
          "standardize: column " + std::to_string(col_id) +
          " has zero sample variance",
          col_id);
    }
    const double sd = std::sqrt(ss / (n - 1.0));
    col = (col.array() - mean) / sd;
  };

  if (target == StandardizeTarget::Columns ||
      target == StandardizeTarget::Both) {
    for (Index j = 0; j < out.x.cols(); ++j) {
      standardize_column(out.x.col(j), j);
    }
  }
  if (target == StandardizeTarget::Response ||
      target == StandardizeTarget::Both) {
    if (!out.y) {
      throw InvalidConfigError("standardize: dataset has no response");
    }
    standardize_column(*out.y, -1);
  }
  return out;
}

namespace {

Dataset synth_impl(Index n, Index p, double exponent, Index spike, Rng& rng,
                   double noise_std, const std::string& kind) {
  if (n < p || p < 1) {
    throw InvalidDimensionsError("synthetic data: need n >= p >= 1");
  }
  if (spike < 0 || spike > n) {
    throw InvalidDimensionsError("synthetic data: need 0 <= spike <= n");
  }
  Dataset ds;
  ds.x.resize(n, p);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) ds.x(i, j) = rng.next_gaussian();
  }
  if (exponent != 0.0) {
    for (Index i = 0; i < n; ++i) {
      ds.x.row(i) *= std::pow(static_cast<double>(i + 1), -exponent);
    }
  }
  if (spike > 0) {
    ds.x.topRows(spike) *= std::sqrt(static_cast<double>(n));
  }

  Vector beta0(p);
  for (Index j = 0; j < p; ++j) beta0(j) = rng.next_gaussian();
  Vector y = ds.x * beta0;
  for (Index i = 0; i < n; ++i) y(i) += noise_std * rng.next_gaussian();
  ds.y = std::move(y);

  std::ostringstream prov;
  prov << "synthetic:" << kind << " n=" << n << " p=" << p
       << " noise_std=" << noise_std << " beta0=[";
  for (Index j = 0; j < p; ++j) {
    if (j > 0) prov << ' ';
    prov << beta0(j);
  }
  prov << "]";
  ds.provenance = prov.str();
  ds.name = kind;
  return ds;
}

}  // namespace

Dataset synth_gaussian(Index n, Index p, Rng& rng, double noise_std) {
  return synth_impl(n, p, 0.0, 0, rng, noise_std, "gaussian");
}

Dataset synth_coherent(Index n, Index p, Index spike, Rng& rng,
                       double noise_std) {
  return synth_impl(n, p, 0.0, spike, rng, noise_std, "coherent");
}

Dataset synth_powerlaw_rows(Index n, Index p, double exponent, Rng& rng,
                            double noise_std) {
  return synth_impl(n, p, exponent, 0, rng, noise_std, "powerlaw");
}

}  // namespace oblique
