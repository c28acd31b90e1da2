#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "nmt/model.hpp"

// Checkpoint file layout: UTF-8 JSON header, '\n', '\0', then the tensor
// payloads as little-endian IEEE-754 binary64 in manifest order. The manifest
// lists params first ("param/<name>"), then Adam moments ("adam_m/<name>",
// "adam_v/<name>") when present; offsets are bytes from the payload start.

namespace nmt {

namespace {

using json = nlohmann::json;

constexpr int kFormatVersion = 1;
constexpr const char* kKind = "divnmt-checkpoint";

void write_f64_le(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

double read_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 7; b >= 0; --b) bits = (bits << 8) | p[b];
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

json config_to_json(const ModelConfig& c) {
  return json{{"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"n_layers", c.n_layers},
              {"d_ffn", c.d_ffn},
              {"dropout", c.dropout},
              {"label_smoothing", c.label_smoothing},
              {"max_positions", c.max_positions},
              {"tied_embeddings", c.tied_embeddings}};
}

ModelConfig config_from_json(const json& j, std::shared_ptr<const Vocabulary> vocab) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.d_ffn = j.at("d_ffn").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.label_smoothing = j.at("label_smoothing").get<double>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.tied_embeddings = j.at("tied_embeddings").get<bool>();
  c.vocab = std::move(vocab);
  return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  if (!ckpt.config.vocab) throw std::invalid_argument("save_checkpoint: config has no vocabulary");

  json manifest = json::array();
  std::string payload;
  std::size_t offset = 0;
  auto emit_group = [&](const char* group, const Parameters& tensors) {
    for (const auto& [name, t] : tensors) {
      json entry;
      entry["name"] = std::string(group) + "/" + name;
      entry["shape"] = t.shape();
      entry["offset"] = offset;
      manifest.push_back(entry);
      for (std::size_t i = 0; i < t.size(); ++i) write_f64_le(payload, t(i));
      offset += t.size() * 8;
    }
  };
  emit_group("param", ckpt.params);
  emit_group("adam_m", ckpt.optimizer.m);
  emit_group("adam_v", ckpt.optimizer.v);

  json vocab_tokens = json::array();
  for (std::size_t i = 0; i < ckpt.config.vocab->size(); ++i) {
    vocab_tokens.push_back(ckpt.config.vocab->token(static_cast<int>(i)));
  }

  json header;
  header["kind"] = kKind;
  header["format_version"] = kFormatVersion;
  header["config"] = config_to_json(ckpt.config);
  header["vocab"] = std::move(vocab_tokens);
  header["direction"] = direction_name(ckpt.direction);
  header["seed"] = ckpt.seed;
  header["step"] = ckpt.step;
  header["valid_ppl"] = ckpt.valid_ppl;
  header["optimizer"] = json{{"t", ckpt.optimizer.t},
                             {"base_lr", ckpt.optimizer.base_lr},
                             {"warmup_steps", ckpt.optimizer.warmup_steps},
                             {"beta1", ckpt.optimizer.beta1},
                             {"beta2", ckpt.optimizer.beta2},
                             {"epsilon", ckpt.optimizer.epsilon}};
  header["manifest"] = std::move(manifest);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  const std::string header_text = header.dump();
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  out.put('\n');
  out.put('\0');
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out.good()) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::size_t nul = bytes.find('\0');
  if (nul == std::string::npos || nul == 0 || bytes[nul - 1] != '\n') {
    throw std::runtime_error("checkpoint format error: missing header terminator in " + path);
  }
  json header;
  try {
    header = json::parse(bytes.substr(0, nul - 1));
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint format error: bad header in " + path + ": " + e.what());
  }
  if (header.value("kind", "") != kKind) {
    throw std::runtime_error("checkpoint format error: not a " + std::string(kKind) + " file: " +
                             path);
  }
  const int version = header.value("format_version", -1);
  if (version != kFormatVersion) {
    throw std::runtime_error("checkpoint version mismatch: file has " + std::to_string(version) +
                             ", expected " + std::to_string(kFormatVersion) + " (" + path + ")");
  }

  auto vocab = std::make_shared<Vocabulary>();
  const auto& vocab_tokens = header.at("vocab");
  for (std::size_t i = 0; i < vocab_tokens.size(); ++i) {
    const std::string tok = vocab_tokens[i].get<std::string>();
    if (i < 4) {
      if (vocab->token(static_cast<int>(i)) != tok) {
        throw std::runtime_error("checkpoint format error: reserved vocabulary mismatch in " +
                                 path);
      }
      continue;
    }
    vocab->add(tok);
  }

  Checkpoint ckpt;
  ckpt.config = config_from_json(header.at("config"), vocab);
  ckpt.direction = header.value("direction", "s2t") == std::string("t2s")
                       ? Direction::TargetToSource
                       : Direction::SourceToTarget;
  ckpt.seed = header.value("seed", 0ull);
  ckpt.step = header.value("step", 0ull);
  ckpt.valid_ppl = header.at("valid_ppl").is_number() ? header["valid_ppl"].get<double>() : 0.0;
  const auto& opt = header.at("optimizer");
  ckpt.optimizer.t = opt.at("t").get<std::uint64_t>();
  ckpt.optimizer.base_lr = opt.at("base_lr").get<double>();
  ckpt.optimizer.warmup_steps = opt.at("warmup_steps").get<std::uint64_t>();
  ckpt.optimizer.beta1 = opt.at("beta1").get<double>();
  ckpt.optimizer.beta2 = opt.at("beta2").get<double>();
  ckpt.optimizer.epsilon = opt.at("epsilon").get<double>();

  const unsigned char* payload = reinterpret_cast<const unsigned char*>(bytes.data()) + nul + 1;
  const std::size_t payload_size = bytes.size() - nul - 1;
  for (const auto& entry : header.at("manifest")) {
    const std::string full_name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    const std::size_t count = shape_product(shape);
    if (offset + count * 8 > payload_size) {
      throw std::runtime_error("checkpoint format error: truncated payload in " + path);
    }
    Tensor t(shape);
    for (std::size_t i = 0; i < count; ++i) {
      t(i) = read_f64_le(payload + offset + i * 8);
    }
    const std::size_t slash = full_name.find('/');
    if (slash == std::string::npos) {
      throw std::runtime_error("checkpoint format error: bad manifest name '" + full_name + "'");
    }
    const std::string group = full_name.substr(0, slash);
    const std::string name = full_name.substr(slash + 1);
    if (group == "param") {
      ckpt.params.emplace(name, std::move(t));
    } else if (group == "adam_m") {
      ckpt.optimizer.m.emplace(name, std::move(t));
    } else if (group == "adam_v") {
      ckpt.optimizer.v.emplace(name, std::move(t));
    } else {
      throw std::runtime_error("checkpoint format error: unknown group '" + group + "'");
    }
  }
  return ckpt;
}

}  // namespace nmt
