#include "baycann/doe.hpp"

#include "baycann/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace baycann::doe {

PriorSpec::PriorSpec(std::vector<PriorBound> bounds) : bounds_(std::move(bounds)) {
  if (bounds_.empty()) throw std::invalid_argument("prior spec is empty");
  for (const auto& b : bounds_) {
    if (!(b.lower < b.upper) || !std::isfinite(b.lower) || !std::isfinite(b.upper)) {
      throw std::invalid_argument("prior '" + b.name + "' needs finite lower < upper");
    }
  }
}

PriorSpec PriorSpec::crc() {
  return PriorSpec({{"l", 2e-6, 2e-5},
                    {"g", 2.0, 4.0},
                    {"lambda2", 0.01, 0.10},
                    {"lambda3", 0.01, 0.04},
                    {"lambda4", 0.20, 0.50},
                    {"lambda5", 0.20, 0.30},
                    {"lambda6", 0.30, 0.70},
                    {"p_adeno", 0.25, 0.35},
                    {"p_small", 0.38, 0.95}});
}

std::vector<std::string> PriorSpec::names() const {
  std::vector<std::string> out;
  for (const auto& b : bounds_) out.push_back(b.name);
  return out;
}

Eigen::VectorXd PriorSpec::lower() const {
  Eigen::VectorXd v(size());
  for (Eigen::Index i = 0; i < size(); ++i) v[i] = bounds_[static_cast<std::size_t>(i)].lower;
  return v;
}

Eigen::VectorXd PriorSpec::upper() const {
  Eigen::VectorXd v(size());
  for (Eigen::Index i = 0; i < size(); ++i) v[i] = bounds_[static_cast<std::size_t>(i)].upper;
  return v;
}

bool PriorSpec::contains(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  if (theta.size() != size()) return false;
  for (Eigen::Index i = 0; i < size(); ++i) {
    const auto& b = bounds_[static_cast<std::size_t>(i)];
    if (!(theta[i] >= b.lower && theta[i] <= b.upper)) return false;
  }
  return true;
}

double PriorSpec::log_density(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  if (!contains(theta)) return -std::numeric_limits<double>::infinity();
  return -range().array().log().sum();
}

Eigen::MatrixXd lhs_sample(const PriorSpec& priors, Eigen::Index n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("lhs_sample needs n >= 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Eigen::Index d = priors.size();
  Eigen::MatrixXd out(n, d);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto& b = priors.bounds()[static_cast<std::size_t>(j)];
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double stratum = static_cast<double>(perm[static_cast<std::size_t>(i)]);
      const double u = (stratum + unif(rng)) / static_cast<double>(n);
      // Guard the upper edge against rounding of lower + range * u.
      out(i, j) = std::min(b.lower + (b.upper - b.lower) * u, std::nextafter(b.upper, b.lower));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scaling

ColumnScaler ColumnScaler::fit(const Eigen::MatrixXd& data) {
  if (data.rows() < 1) throw std::invalid_argument("cannot fit scaler on empty data");
  ColumnScaler s;
  s.min = data.colwise().minCoeff().transpose();
  s.max = data.colwise().maxCoeff().transpose();
  return s;
}

Eigen::VectorXd ColumnScaler::slope() const {
  Eigen::VectorXd span = max - min;
  // Constant columns map to -1; treat their span as 1.
  for (Eigen::Index i = 0; i < span.size(); ++i) {
    if (!(span[i] > 0.0)) span[i] = 1.0;
  }
  return 2.0 * span.cwiseInverse();
}

Eigen::MatrixXd ColumnScaler::scale(const Eigen::MatrixXd& data) const {
  const Eigen::RowVectorXd k = slope().transpose();
  return ((data.rowwise() - min.transpose()).array().rowwise() * k.array() - 1.0).matrix();
}

Eigen::MatrixXd ColumnScaler::unscale(const Eigen::MatrixXd& scaled) const {
  const Eigen::RowVectorXd k = slope().transpose();
  return (((scaled.array() + 1.0).rowwise() / k.array()).rowwise() + min.transpose().array())
      .matrix();
}

Eigen::VectorXd ColumnScaler::scale_vector(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  return ((v - min).array() * slope().array() - 1.0).matrix();
}

Eigen::VectorXd ColumnScaler::unscale_vector(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  return ((v.array() + 1.0) / slope().array() + min.array()).matrix();
}

nlohmann::json ColumnScaler::to_json() const {
  return {{"min", std::vector<double>(min.data(), min.data() + min.size())},
          {"max", std::vector<double>(max.data(), max.data() + max.size())}};
}

ColumnScaler ColumnScaler::from_json(const nlohmann::json& j) {
  const auto lo = j.at("min").get<std::vector<double>>();
  const auto hi = j.at("max").get<std::vector<double>>();
  if (lo.size() != hi.size()) throw std::invalid_argument("scaler min/max size mismatch");
  ColumnScaler s;
  s.min = Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  s.max = Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));
  return s;
}

// ---------------------------------------------------------------------------
// Design

Simulator crc_simulator(const nathist::LifeTable& lt, nathist::NatHistParams base) {
  return [lt, base](const Eigen::VectorXd& theta) -> Eigen::VectorXd {
    return nathist::run_cohort(nathist::with_calibrated(base, theta), lt).outputs.as_vector();
  };
}

Design run_design(const PriorSpec& priors, Eigen::Index n, std::uint64_t seed,
                  const Simulator& sim, std::vector<std::string> output_names) {
  const Eigen::MatrixXd inputs = lhs_sample(priors, n, seed);
  const auto n_out = static_cast<Eigen::Index>(output_names.size());
  Eigen::MatrixXd outputs(n, n_out);
  std::vector<std::string> failure(static_cast<std::size_t>(n));

  auto eval_rows = [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index i = begin; i < end; ++i) {
      try {
        const Eigen::VectorXd y = sim(inputs.row(i).transpose());
        if (y.size() != n_out) {
          failure[static_cast<std::size_t>(i)] = "wrong output length";
        } else if (!y.allFinite()) {
          failure[static_cast<std::size_t>(i)] = "non-finite output";
        } else {
          outputs.row(i) = y.transpose();
        }
      } catch (const std::exception& e) {
        failure[static_cast<std::size_t>(i)] = e.what();
      }
    }
  };
  const Eigen::Index workers =
      std::min<Eigen::Index>(std::max(1u, std::thread::hardware_concurrency()), n);
  if (workers == 1) {
    eval_rows(0, n);
  } else {
    std::vector<std::jthread> pool;
    for (Eigen::Index w = 0; w < workers; ++w) {
      pool.emplace_back(eval_rows, n * w / workers, n * (w + 1) / workers);
    }
  }

  Design d;
  d.input_names = priors.names();
  d.output_names = std::move(output_names);
  d.seed = seed;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (failure[static_cast<std::size_t>(i)].empty()) {
      keep.push_back(i);
    } else {
      d.dropped.push_back({i, failure[static_cast<std::size_t>(i)]});
    }
  }
  if (keep.size() < 2) throw std::runtime_error("design has fewer than 2 usable rows");
  d.inputs = inputs(keep, Eigen::all);
  d.outputs = outputs(keep, Eigen::all);
  d.input_scaler = ColumnScaler::fit(d.inputs);
  d.output_scaler = ColumnScaler::fit(d.outputs);
  return d;
}

Design run_design(const PriorSpec& priors, Eigen::Index n, std::uint64_t seed,
                  const nathist::LifeTable& lt) {
  return run_design(priors, n, seed, crc_simulator(lt), nathist::output_names());
}

std::pair<Design, Design> split(const Design& design, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split fraction must lie in (0, 1)");
  }
  const Eigen::Index n = design.rows();
  const auto n_train = static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(n)));
  if (n_train < 1 || n_train >= n) throw std::invalid_argument("split leaves an empty part");

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Eigen::Index> train_idx(idx.begin(), idx.begin() + n_train);
  std::vector<Eigen::Index> valid_idx(idx.begin() + n_train, idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(valid_idx.begin(), valid_idx.end());

  auto take = [&](const std::vector<Eigen::Index>& rows) {
    Design part;
    part.input_names = design.input_names;
    part.output_names = design.output_names;
    part.inputs = design.inputs(rows, Eigen::all);
    part.outputs = design.outputs(rows, Eigen::all);
    part.seed = design.seed;
    return part;
  };
  Design train = take(train_idx);
  Design valid = take(valid_idx);
  train.input_scaler = ColumnScaler::fit(train.inputs);
  train.output_scaler = ColumnScaler::fit(train.outputs);
  valid.input_scaler = train.input_scaler;
  valid.output_scaler = train.output_scaler;
  return {std::move(train), std::move(valid)};
}

void Design::write(const std::filesystem::path& csv_path, const std::filesystem::path& json_path,
                   const nlohmann::json& extra) const {
  std::ostringstream out;
  bool first = true;
  for (const auto& name : input_names) {
    out << (first ? "" : ",") << name;
    first = false;
  }
  for (const auto& name : output_names) out << ',' << name;
  out << '\n';
  for (Eigen::Index i = 0; i < rows(); ++i) {
    for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
      out << (j ? "," : "") << io::format_double(inputs(i, j));
    }
    for (Eigen::Index j = 0; j < outputs.cols(); ++j) {
      out << ',' << io::format_double(outputs(i, j));
    }
    out << '\n';
  }
  io::write_text(csv_path, out.str());

  nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
  meta["seed"] = seed;
  meta["rows"] = rows();
  meta["input_scaler"] = input_scaler.to_json();
  meta["output_scaler"] = output_scaler.to_json();
  meta["dropped_count"] = dropped.size();
  auto& log = meta["dropped"] = nlohmann::json::array();
  for (const auto& d : dropped) log.push_back({{"row", d.row}, {"reason", d.reason}});
  io::write_text(json_path, meta.dump(2) + "\n");
}

Design Design::read(const std::filesystem::path& csv_path, const std::filesystem::path& json_path) {
  const auto table = io::read_csv(csv_path);
  const auto meta = nlohmann::json::parse(io::read_text(json_path));
  Design d;
  d.input_scaler = ColumnScaler::from_json(meta.at("input_scaler"));
  d.output_scaler = ColumnScaler::from_json(meta.at("output_scaler"));
  d.seed = meta.value("seed", std::uint64_t{0});
  const auto n_in = static_cast<std::size_t>(d.input_scaler.size());
  const auto n_out = static_cast<std::size_t>(d.output_scaler.size());
  if (table.header.size() != n_in + n_out) {
    throw std::invalid_argument("design CSV columns do not match sidecar scalers");
  }
  d.input_names.assign(table.header.begin(), table.header.begin() + static_cast<long>(n_in));
  d.output_names.assign(table.header.begin() + static_cast<long>(n_in), table.header.end());
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  d.inputs.resize(n, static_cast<Eigen::Index>(n_in));
  d.outputs.resize(n, static_cast<Eigen::Index>(n_out));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < n_in; ++j) {
      d.inputs(i, static_cast<Eigen::Index>(j)) = io::parse_double(row[j]);
    }
    for (std::size_t j = 0; j < n_out; ++j) {
      d.outputs(i, static_cast<Eigen::Index>(j)) = io::parse_double(row[n_in + j]);
    }
  }
  for (const auto& e : meta.value("dropped", nlohmann::json::array())) {
    d.dropped.push_back({e.at("row").get<Eigen::Index>(), e.at("reason").get<std::string>()});
  }
  return d;
}

}  // namespace baycann::doe
