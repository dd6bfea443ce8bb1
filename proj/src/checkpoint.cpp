#include "latcast/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace latcast {

std::uint32_t crc32(std::span<const unsigned char> bytes) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) {
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
      }
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (unsigned char b : bytes) {
    crc = table[(crc ^ b) & 0xFFu] ^ (crc >> 8);
  }
  return crc ^ 0xFFFFFFFFu;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

nlohmann::json scaler_to_json(const Scaler& s) {
  nlohmann::json j;
  j["min"] = std::vector<double>(s.min.data(), s.min.data() + kFeatureCount);
  j["max"] = std::vector<double>(s.max.data(), s.max.data() + kFeatureCount);
  j["target_min"] = s.target_min;
  j["target_max"] = s.target_max;
  return j;
}

Scaler scaler_from_json(const nlohmann::json& j) {
  Scaler s;
  auto mins = j.at("min").get<std::vector<double>>();
  auto maxs = j.at("max").get<std::vector<double>>();
  if (mins.size() != kFeatureCount || maxs.size() != kFeatureCount) {
    throw CheckpointError("scaler min/max must have " +
                          std::to_string(kFeatureCount) + " entries");
  }
  for (int i = 0; i < kFeatureCount; ++i) {
    s.min[i] = mins[i];
    s.max[i] = maxs[i];
  }
  s.target_min = j.at("target_min").get<double>();
  s.target_max = j.at("target_max").get<double>();
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  auto views = param_views(ckpt.weights);

  // Binary section first, so its checksum can go into the header.
  std::string blob;
  for (const auto& v : views) {
    const auto* p = reinterpret_cast<const char*>(v.values.data());
    blob.append(p, static_cast<std::size_t>(v.values.size()) * sizeof(double));
  }
  const std::uint32_t checksum = crc32(
      {reinterpret_cast<const unsigned char*>(blob.data()), blob.size()});

  nlohmann::json shapes = nlohmann::json::array();
  const Weights& w = ckpt.weights;
  auto add_shape = [&shapes](const char* name, Index rows, Index cols) {
    shapes.push_back({{"name", name}, {"rows", rows}, {"cols", cols}});
  };
  add_shape("w_in_fwd", w.fwd.w_in.rows(), w.fwd.w_in.cols());
  add_shape("w_rec_fwd", w.fwd.w_rec.rows(), w.fwd.w_rec.cols());
  add_shape("bias_fwd", w.fwd.bias.size(), 1);
  add_shape("w_in_bwd", w.bwd.w_in.rows(), w.bwd.w_in.cols());
  add_shape("w_rec_bwd", w.bwd.w_rec.rows(), w.bwd.w_rec.cols());
  add_shape("bias_bwd", w.bwd.bias.size(), 1);
  add_shape("head_w", w.head_w.size(), 1);
  add_shape("head_bias", w.head_bias.size(), 1);

  nlohmann::json header;
  header["format"] = kCheckpointFormat;
  header["config"] = nlohmann::json::parse(model_config_to_json(ckpt.config));
  header["scaler"] = scaler_to_json(ckpt.scaler);
  header["shapes"] = shapes;
  header["crc32"] = checksum;
  header["best_val_loss"] = ckpt.best_val_loss;
  header["epoch"] = ckpt.epoch;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open for write: " + path.string());
  os << header.dump() << '\n';
  os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  os.flush();
  if (!os) throw CheckpointError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open: " + path.string());

  std::string header_line;
  if (!std::getline(is, header_line)) {
    throw CheckpointError("missing header line");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(std::string("corrupt header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    if (header.at("format").get<std::string>() != kCheckpointFormat) {
      throw CheckpointError("unsupported format '" +
                            header.at("format").get<std::string>() + "'");
    }
    ckpt.config = model_config_from_json(header.at("config").dump());
    ckpt.scaler = scaler_from_json(header.at("scaler"));
    ckpt.best_val_loss = header.at("best_val_loss").get<double>();
    ckpt.epoch = header.at("epoch").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt header: ") + e.what());
  }

  const Index d = ckpt.config.input_dim;
  const Index u = ckpt.config.units;
  ckpt.weights = Weights::zeros(d, u);
  auto views = param_views(ckpt.weights);

  // Shapes in the file must agree with the geometry the config implies.
  const auto& shapes = header.at("shapes");
  if (shapes.size() != views.size()) {
    throw CheckpointError("expected " + std::to_string(views.size()) +
                          " tensors, header lists " +
                          std::to_string(shapes.size()));
  }
  std::vector<std::pair<Index, Index>> expected = {
      {d, 4 * u}, {u, 4 * u}, {4 * u, 1}, {d, 4 * u},
      {u, 4 * u}, {4 * u, 1}, {2 * u, 1}, {1, 1}};
  for (std::size_t k = 0; k < views.size(); ++k) {
    const auto& sh = shapes[k];
    if (sh.at("name").get<std::string>() != views[k].name) {
      throw CheckpointError("tensor order mismatch at index " +
                            std::to_string(k));
    }
    if (sh.at("rows").get<Index>() != expected[k].first ||
        sh.at("cols").get<Index>() != expected[k].second) {
      throw CheckpointError(std::string("shape error in field ") +
                            views[k].name + ": file has " +
                            std::to_string(sh.at("rows").get<Index>()) + "x" +
                            std::to_string(sh.at("cols").get<Index>()) +
                            ", config implies " +
                            std::to_string(expected[k].first) + "x" +
                            std::to_string(expected[k].second));
    }
  }

  std::string blob((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  std::size_t need = 0;
  for (const auto& v : views) {
    need += static_cast<std::size_t>(v.values.size()) * sizeof(double);
  }
  if (blob.size() != need) {
    throw CheckpointError("corrupt file: binary section is " +
                          std::to_string(blob.size()) + " bytes, expected " +
                          std::to_string(need));
  }
  const std::uint32_t checksum = crc32(
      {reinterpret_cast<const unsigned char*>(blob.data()), blob.size()});
  if (checksum != header.at("crc32").get<std::uint32_t>()) {
    throw CheckpointError("corrupt file: checksum mismatch");
  }

  std::size_t off = 0;
  auto mutable_views = param_views(ckpt.weights);
  for (auto& v : mutable_views) {
    const std::size_t n = static_cast<std::size_t>(v.values.size()) *
                          sizeof(double);
    std::memcpy(v.values.data(), blob.data() + off, n);
    off += n;
  }
  return ckpt;
}

void check_compatible(const Checkpoint& ckpt, const ModelConfig& expected) {
  auto mismatch = [](const char* field, auto got, auto want) {
    throw CheckpointError(std::string("shape error in field ") + field +
                          ": checkpoint has " + std::to_string(got) +
                          ", session expects " + std::to_string(want));
  };
  if (ckpt.config.units != expected.units) {
    mismatch("units", ckpt.config.units, expected.units);
  }
  if (ckpt.config.lookback != expected.lookback) {
    mismatch("lookback", ckpt.config.lookback, expected.lookback);
  }
  if (ckpt.config.input_dim != expected.input_dim) {
    mismatch("input_dim", ckpt.config.input_dim, expected.input_dim);
  }
}

}  // namespace latcast
