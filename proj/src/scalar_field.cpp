#include "qcbf/scalar_field.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "qcbf/errors.hpp"

namespace qcbf {

namespace {
constexpr size_t kMaxDim = 8;
}

ScalarField::ScalarField(Grid grid, std::vector<double> values, std::string label,
                         nlohmann::json params)
    : grid_(std::move(grid)),
      values_(std::move(values)),
      label_(std::move(label)),
      params_(std::move(params)) {
  if (values_.size() != grid_.node_count())
    throw ContractError("scalar field: value count does not match grid");
  for (double v : values_)
    if (!std::isfinite(v)) throw NumericalError("scalar field: non-finite value");
}

double ScalarField::interpolate(const Vec& x) const {
  bool clamped = false;
  return interpolate_ptr(x.data(), x.size(), clamped);
}

double ScalarField::interpolate(const Vec& x, bool& clamped) const {
  return interpolate_ptr(x.data(), x.size(), clamped);
}

double ScalarField::interpolate_ptr(const double* x, size_t n, bool& clamped) const {
  if (n != grid_.dim()) throw ContractError("interpolate: dimension mismatch");
  return interpolate_raw(grid_, values_.data(), x, clamped);
}

double interpolate_raw(const Grid& grid, const double* values, const double* x,
                       bool& clamped) {
  const size_t dim = grid.dim();
  int cell[kMaxDim];
  double frac[kMaxDim];
  clamped = false;
  for (size_t i = 0; i < dim; ++i) {
    bool c = false;
    grid.locate(i, x[i], cell[i], frac[i], c);
    clamped = clamped || c;
  }
  size_t base = 0;
  for (size_t i = 0; i < dim; ++i)
    base += grid.stride(i) * static_cast<size_t>(cell[i]);
  return corner_sum(grid, values, base, frac);
}

std::vector<uint8_t> superlevel_mask(const ScalarField& f, double level) {
  std::vector<uint8_t> mask(f.values().size());
  for (size_t i = 0; i < mask.size(); ++i) mask[i] = f.values()[i] >= level ? 1 : 0;
  return mask;
}

size_t count_superlevel(const ScalarField& f, double level) {
  size_t n = 0;
  for (double v : f.values())
    if (v >= level) ++n;
  return n;
}

int64_t creation_timestamp() {
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (end != env && *end == '\0') return static_cast<int64_t>(v);
  }
  return static_cast<int64_t>(std::time(nullptr));
}

void save_field(const ScalarField& f, const std::string& json_path, int64_t created_unix) {
  nlohmann::json header;
  header["schema"] = 1;
  header["kind"] = "scalar-field";
  header["label"] = f.label();
  header["dimension"] = f.grid().dim();
  nlohmann::json dims = nlohmann::json::array();
  for (const GridDim& d : f.grid().dims())
    dims.push_back({{"min", d.min}, {"max", d.max}, {"count", d.count}});
  header["dims"] = dims;
  header["params"] = f.params();
  header["created_unix"] = created_unix;

  const std::filesystem::path jp(json_path);
  if (f.values().size() <= kInlineValueLimit) {
    header["values"] = f.values();
  } else {
    std::filesystem::path bp(jp);
    bp.replace_extension(".bin");
    header["values_file"] = bp.filename().string();
    std::ofstream bin(bp, std::ios::binary | std::ios::trunc);
    if (!bin) throw ConfigError("cannot write " + bp.string());
    bin.write(reinterpret_cast<const char*>(f.values().data()),
              static_cast<std::streamsize>(f.values().size() * sizeof(double)));
    if (!bin) throw ConfigError("short write to " + bp.string());
  }
  std::ofstream out(jp, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + json_path);
  out << header.dump(2) << "\n";
}

ScalarField load_field(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw ConfigError("cannot read " + json_path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("bad field file " + json_path + ": " + e.what());
  }
  try {
    if (header.at("kind").get<std::string>() != "scalar-field")
      throw ConfigError("not a scalar-field file: " + json_path);
    std::vector<GridDim> dims;
    for (const auto& d : header.at("dims"))
      dims.push_back({d.at("min").get<double>(), d.at("max").get<double>(),
                      d.at("count").get<int>()});
    Grid grid(dims);
    if (header.at("dimension").get<size_t>() != grid.dim())
      throw ConfigError("field dimension mismatch in " + json_path);
    std::vector<double> values;
    if (header.contains("values")) {
      values = header.at("values").get<std::vector<double>>();
    } else {
      const std::filesystem::path bp =
          std::filesystem::path(json_path).parent_path() /
          header.at("values_file").get<std::string>();
      std::ifstream bin(bp, std::ios::binary);
      if (!bin) throw ConfigError("cannot read " + bp.string());
      values.resize(grid.node_count());
      bin.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(double)));
      if (bin.gcount() != static_cast<std::streamsize>(values.size() * sizeof(double)))
        throw ConfigError("truncated value blob " + bp.string());
    }
    return ScalarField(std::move(grid), std::move(values),
                       header.value("label", std::string()),
                       header.value("params", nlohmann::json::object()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad field file " + json_path + ": " + e.what());
  }
}

}  // namespace qcbf
