#include "checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "error.hpp"

namespace hyperrna {

namespace {

constexpr std::string_view kMagic = "HYPERRNA-CKPT v1";

void append_values(std::string& out, std::span<const double> values) {
  char buf[40];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, i == 0 ? "%.17g" : " %.17g", values[i]);
    out += buf;
  }
  out += '\n';
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string write_checkpoint(const std::map<std::string, std::string>& meta,
                             const ParameterStore& params, const AdamState& adam) {
  std::string out(kMagic);
  out += "\n#meta " + std::to_string(meta.size()) + "\n";
  for (const auto& [k, v] : meta) out += k + "=" + v + "\n";
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor& t = params.tensors()[p];
    out += "#param " + params.names()[p] + " " + std::to_string(t.rank());
    for (std::size_t d : t.shape()) out += " " + std::to_string(d);
    out += '\n';
    append_values(out, t.values());
  }
  out += "#adam " + format_double(adam.lr) + " " + format_double(adam.beta1) + " " +
         format_double(adam.beta2) + " " + format_double(adam.eps) + " " +
         std::to_string(adam.step) + "\n";
  if (!adam.m.empty()) {
    for (std::size_t p = 0; p < params.size(); ++p) {
      out += "#m " + params.names()[p] + "\n";
      append_values(out, adam.m[p]);
      out += "#v " + params.names()[p] + "\n";
      append_values(out, adam.v[p]);
    }
  }
  out += "#end\n";
  return out;
}

CheckpointData read_checkpoint(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    return Error(ErrorCode::kParseError, "checkpoint line " + std::to_string(line_no) + ": " + what);
  };
  auto next = [&]() {
    if (!std::getline(in, line)) throw fail("unexpected end of file");
    ++line_no;
  };
  auto read_values = [&](std::size_t count) {
    next();
    std::vector<double> values;
    values.reserve(count);
    const char* p = line.c_str();
    char* end = nullptr;
    for (std::size_t i = 0; i < count; ++i) {
      const double x = std::strtod(p, &end);
      if (end == p) throw fail("expected " + std::to_string(count) + " values");
      values.push_back(x);
      p = end;
    }
    return values;
  };

  next();
  if (line != kMagic) throw fail("missing '" + std::string(kMagic) + "' header");
  CheckpointData ck;
  next();
  std::size_t meta_count = 0;
  if (std::sscanf(line.c_str(), "#meta %zu", &meta_count) != 1) throw fail("expected #meta");
  for (std::size_t i = 0; i < meta_count; ++i) {
    next();
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw fail("expected key=value");
    ck.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  while (true) {
    next();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "#param") {
      std::string name;
      std::size_t rank = 0;
      ls >> name >> rank;
      Shape shape(rank);
      for (auto& d : shape) ls >> d;
      if (!ls) throw fail("bad #param header");
      ck.names.push_back(name);
      ck.values.push_back(read_values(shape_numel(shape)));
      ck.shapes.push_back(std::move(shape));
    } else if (tag == "#adam") {
      ls >> ck.adam.lr >> ck.adam.beta1 >> ck.adam.beta2 >> ck.adam.eps >> ck.adam.step;
      if (!ls) throw fail("bad #adam header");
    } else if (tag == "#m" || tag == "#v") {
      std::string name;
      ls >> name;
      const auto idx = static_cast<std::size_t>(
          std::find(ck.names.begin(), ck.names.end(), name) - ck.names.begin());
      if (idx >= ck.names.size()) throw fail("moment for unknown parameter " + name);
      auto& moments = tag == "#m" ? ck.adam.m : ck.adam.v;
      if (moments.size() != idx) throw fail("moments out of parameter order");
      moments.push_back(read_values(shape_numel(ck.shapes[idx])));
    } else if (tag == "#end") {
      break;
    } else {
      throw fail("unexpected section '" + tag + "'");
    }
  }
  if (!ck.adam.m.empty() && (ck.adam.m.size() != ck.names.size() || ck.adam.v.size() != ck.names.size())) {
    throw fail("optimizer moments do not cover every parameter");
  }
  return ck;
}

void load_parameter_values(ParameterStore& params, const std::vector<std::vector<double>>& values) {
  if (values.size() != params.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "expected " + std::to_string(params.size()) +
                                                   " parameter tensors, got " +
                                                   std::to_string(values.size()));
  }
  for (std::size_t p = 0; p < values.size(); ++p) {
    auto dst = params.tensors()[p].mutable_values();
    if (dst.size() != values[p].size()) {
      throw Error(ErrorCode::kDimensionMismatch, "parameter " + params.names()[p] + " has " +
                                                     std::to_string(dst.size()) + " values, got " +
                                                     std::to_string(values[p].size()));
    }
    std::copy(values[p].begin(), values[p].end(), dst.begin());
  }
}

std::vector<std::vector<double>> snapshot_parameter_values(const ParameterStore& params) {
  std::vector<std::vector<double>> out;
  for (const Tensor& t : params.tensors()) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

HyperRnaModel model_from_checkpoint(const CheckpointData& ckpt) {
  ModelConfig config;
  config.update_from(ckpt.meta);
  HyperRnaModel model(config, 0);
  const ParameterStore& store = model.parameters();
  if (store.names() != ckpt.names) {
    throw Error(ErrorCode::kDimensionMismatch,
                "checkpoint parameter set does not match the configured architecture");
  }
  for (std::size_t p = 0; p < ckpt.names.size(); ++p) {
    if (store.tensors()[p].shape() != ckpt.shapes[p]) {
      throw Error(ErrorCode::kDimensionMismatch, "parameter " + ckpt.names[p] + " has shape " +
                                                     shape_str(ckpt.shapes[p]) + ", model expects " +
                                                     shape_str(store.tensors()[p].shape()));
    }
  }
  load_parameter_values(model.parameters(), ckpt.values);
  return model;
}

void atomic_write_file(const std::string& path, std::string_view content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot open " + tmp + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::kIoError, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIoError, "rename " + tmp + " -> " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace hyperrna
