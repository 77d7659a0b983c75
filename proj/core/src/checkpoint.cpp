#include "pemv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pemv/error.hpp"

namespace pemv {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'E', 'M', 'V', 'C', 'K', 'P', 'T'};

struct TensorRef {
  std::string name;
  std::string dtype;
  void* data;
  std::size_t count;
  std::size_t element_size() const { return dtype == "f32" ? 4 : 8; }
};

std::vector<TensorRef> tensor_table(PemvModel& model) {
  std::vector<TensorRef> out;
  for (const auto& e : model.backbone().state()) {
    out.push_back({"backbone." + e.name, "f32", e.values->data(), e.values->size()});
  }
  for (auto* p : model.head_parameters()) out.push_back({p->name, "f64", p->value.data(), p->value.size()});
  return out;
}

template <typename T>
void append_raw(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

std::string serialize_checkpoint(PemvModel& model, const ExperimentConfig& config, std::uint64_t seed,
                                 int epoch) {
  const auto tensors = tensor_table(model);
  nlohmann::json header;
  header["config"] = render_config(config);
  header["config_hash"] = config_hash_hex(config);
  header["seed"] = seed;
  header["epoch"] = epoch;
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : tensors) header["tensors"].push_back({{"name", t.name}, {"dtype", t.dtype}, {"count", t.count}});
  const PrototypeBank& bank = model.prototypes();
  header["prototypes"] = {{"dim", bank.dim()}, {"momentum", bank.momentum()}, {"initialized", nlohmann::json::array()}};
  for (int c = 0; c < bank.num_classes(); ++c) header["prototypes"]["initialized"].push_back(bank.initialized(c));

  const std::string header_text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  append_raw(out, kCheckpointVersion);
  append_raw(out, static_cast<std::uint64_t>(header_text.size()));
  out += header_text;
  for (const auto& t : tensors) out.append(static_cast<const char*>(t.data), t.count * t.element_size());
  for (int c = 0; c < bank.num_classes(); ++c) {
    const Eigen::VectorXd* p = bank.prototype(c);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(bank.dim());
    const Eigen::VectorXd& v = p != nullptr ? *p : zero;
    out.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(double));
  }
  return out;
}

void write_checkpoint(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("short write to checkpoint " + path.string());
}

LoadedCheckpoint deserialize_checkpoint(std::string_view bytes) {
  std::size_t pos = 0;
  auto take = [&](std::size_t n) {
    if (bytes.size() - pos < n) throw CheckpointError("checkpoint is truncated");
    const std::string_view s = bytes.substr(pos, n);
    pos += n;
    return s;
  };
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  take(sizeof kMagic);
  std::uint32_t version = 0;
  std::memcpy(&version, take(sizeof version).data(), sizeof version);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, take(sizeof header_len).data(), sizeof header_len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(take(static_cast<std::size_t>(header_len)));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }

  LoadedCheckpoint out;
  try {
    out.config = parse_config_text(header.at("config").get<std::string>(), "<checkpoint>");
    out.config.validate();
    out.config_hash = header.at("config_hash").get<std::string>();
    out.seed = header.at("seed").get<std::uint64_t>();
    out.epoch = header.at("epoch").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("incomplete checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config is invalid: ") + e.what());
  }
  if (config_hash_hex(out.config) != out.config_hash) {
    throw CheckpointError("checkpoint config hash mismatch: stored " + out.config_hash + ", computed " +
                          config_hash_hex(out.config));
  }

  out.model = std::make_unique<PemvModel>(out.config.model, 0);
  const auto tensors = tensor_table(*out.model);
  const auto& listed = header.at("tensors");
  if (listed.size() != tensors.size()) throw CheckpointError("checkpoint tensor count does not match the model");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = tensors[i];
    if (listed[i].at("name") != t.name || listed[i].at("dtype") != t.dtype ||
        listed[i].at("count").get<std::size_t>() != t.count) {
      throw CheckpointError("checkpoint tensor '" + listed[i].at("name").get<std::string>() +
                            "' does not match model tensor '" + t.name + "'");
    }
    const std::string_view raw = take(t.count * t.element_size());
    std::memcpy(t.data, raw.data(), raw.size());
  }
  PrototypeBank& bank = out.model->prototypes();
  const auto& flags = header.at("prototypes").at("initialized");
  if (static_cast<int>(flags.size()) != bank.num_classes() || header.at("prototypes").at("dim") != bank.dim()) {
    throw CheckpointError("checkpoint prototype table does not match the model");
  }
  for (int c = 0; c < bank.num_classes(); ++c) {
    Eigen::VectorXd v(bank.dim());
    const std::string_view raw = take(static_cast<std::size_t>(bank.dim()) * sizeof(double));
    std::memcpy(v.data(), raw.data(), raw.size());
    if (flags[static_cast<std::size_t>(c)].get<bool>()) bank.set(c, std::move(v));
  }
  if (pos != bytes.size()) throw CheckpointError("checkpoint has trailing bytes");
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace pemv
