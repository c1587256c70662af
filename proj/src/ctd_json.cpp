#include "ctdopt/ctd_json.hpp"

#include "ctdopt/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ctdopt {

std::string format_real(double x) {
  if (!std::isfinite(x)) throw DomainError("cannot serialize non-finite real");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string ctd_to_json_string(const CTD& u) {
  std::ostringstream os;
  os << "{\"dims\": " << u.dims() << ", \"modes\": [";
  for (Index j = 0; j < u.dims(); ++j) os << (j ? ", " : "") << u.mode(j);
  os << "], \"svalues\": [";
  for (Index l = 0; l < u.rank(); ++l) os << (l ? ", " : "") << format_real(u.svalues()[l]);
  os << "], \"factors\": [";
  for (Index j = 0; j < u.dims(); ++j) {
    os << (j ? ", " : "") << "[";
    const Eigen::MatrixXd& f = u.factor(j);
    // Eigen storage is column-major already.
    for (Index k = 0; k < f.size(); ++k) os << (k ? ", " : "") << format_real(f.data()[k]);
    os << "]";
  }
  os << "]}\n";
  return os.str();
}

CTD ctd_from_json(const nlohmann::json& j) {
  try {
    const Index d = j.at("dims").get<Index>();
    const auto modes = j.at("modes").get<std::vector<Index>>();
    const auto sv = j.at("svalues").get<std::vector<double>>();
    const auto& fac = j.at("factors");
    if (d < 1 || static_cast<Index>(modes.size()) != d) throw ShapeError("\"dims\" does not match \"modes\"");
    if (!fac.is_array() || static_cast<Index>(fac.size()) != d) throw ShapeError("\"factors\" must list d arrays");
    const Index r = static_cast<Index>(sv.size());
    std::vector<Eigen::MatrixXd> f;
    for (Index k = 0; k < d; ++k) {
      const auto flat = fac[static_cast<std::size_t>(k)].get<std::vector<double>>();
      const Index m = modes[static_cast<std::size_t>(k)];
      if (m < 1) throw ShapeError("mode sizes must be positive");
      if (static_cast<Index>(flat.size()) != m * r)
        throw ShapeError("factor " + std::to_string(k) + " has " + std::to_string(flat.size()) +
                         " entries, expected " + std::to_string(m * r));
      f.push_back(Eigen::Map<const Eigen::MatrixXd>(flat.data(), m, r));
    }
    if (r == 0) return CTD::zero(modes);
    Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(sv.data(), r);
    return CTD::from_terms(std::move(f), std::move(w));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed CTD document: ") + e.what());
  }
}

CTD ctd_from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("invalid JSON: ") + e.what());
  }
  return ctd_from_json(j);
}

void write_ctd_file(const std::filesystem::path& path, const CTD& u) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << ctd_to_json_string(u);
}

CTD read_ctd_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ctd_from_json_string(ss.str());
}

nlohmann::json multi_index_to_json(const MultiIndex& i) {
  nlohmann::json a = nlohmann::json::array();
  for (Index k : i) a.push_back(k + 1);
  return a;
}

MultiIndex multi_index_from_json(const nlohmann::json& j) {
  MultiIndex i;
  for (const auto& v : j) {
    const Index k = v.get<Index>();
    if (k < 1) throw RangeError("serialized multi-indices are 1-based");
    i.push_back(k - 1);
  }
  return i;
}

}  // namespace ctdopt
