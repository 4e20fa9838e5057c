#include "sckd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <json.hpp>

#include "sckd/config.hpp"
#include "sckd/error.hpp"
#include "sckd/hash.hpp"

namespace sckd {
namespace {

constexpr char kMagic[8] = {'S', 'C', 'K', 'D', 'C', 'K', 'P', '1'};

std::uint8_t dtype_code(torch::Dtype d) {
  switch (d) {
    case torch::kFloat32:
      return 0;
    case torch::kFloat64:
      return 1;
    case torch::kInt64:
      return 2;
    default:
      throw ContractViolation("checkpoint: unsupported tensor dtype");
  }
}

torch::Dtype dtype_from(std::uint8_t c, std::size_t offset) {
  switch (c) {
    case 0:
      return torch::kFloat32;
    case 1:
      return torch::kFloat64;
    case 2:
      return torch::kInt64;
    default:
      throw ParseError("checkpoint: unknown dtype code", offset);
  }
}

class Out {
 public:
  template <typename T>
  void pod(T v) {
    raw(&v, sizeof(T));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void str32(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> buf;
};

class In {
 public:
  explicit In(const std::vector<std::uint8_t>& b) : b_(b) {}
  template <typename T>
  T pod(const char* what) {
    T v;
    raw(&v, sizeof(T), what);
    return v;
  }
  void raw(void* p, std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) throw ParseError(std::string("truncated checkpoint while reading ") + what, pos_);
    std::memcpy(p, b_.data() + pos_, n);
    pos_ += n;
  }
  std::string str(std::size_t n, const char* what) {
    std::string s(n, '\0');
    raw(s.data(), n, what);
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_meta(const ModelConfig& model, int adapter_kernel) {
  nlohmann::json j = {{"model", nlohmann::json::parse(serialize_model_config(model))}, {"adapter_kernel", adapter_kernel}};
  return j.dump();
}

ModelConfig Checkpoint::model_config() const {
  auto j = nlohmann::json::parse(meta, nullptr, false);
  if (j.is_discarded() || !j.contains("model")) throw ConfigError("checkpoint metadata has no model section");
  return parse_model_config(j["model"].dump());
}

int Checkpoint::adapter_kernel() const {
  auto j = nlohmann::json::parse(meta, nullptr, false);
  if (j.is_discarded() || !j.contains("adapter_kernel")) throw ConfigError("checkpoint metadata has no adapter_kernel");
  return j["adapter_kernel"].get<int>();
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  Out o;
  o.raw(kMagic, sizeof(kMagic));
  o.pod<std::uint8_t>(static_cast<std::uint8_t>(c.kind));
  o.pod<std::uint64_t>(c.config_hash);
  o.pod<std::uint32_t>(c.epoch);
  o.str32(c.meta);
  o.str32(c.rng_state);
  o.pod<std::uint32_t>(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    o.pod<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    o.raw(name.data(), name.size());
    auto ct = t.detach().contiguous().cpu();
    o.pod<std::uint8_t>(dtype_code(ct.scalar_type()));
    o.pod<std::uint8_t>(static_cast<std::uint8_t>(ct.dim()));
    for (auto s : ct.sizes()) o.pod<std::int64_t>(s);
    o.raw(ct.data_ptr(), static_cast<std::size_t>(ct.numel()) * ct.element_size());
  }
  return std::move(o.buf);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  In in(bytes);
  char magic[8];
  in.raw(magic, 8, "magic");
  if (std::memcmp(magic, kMagic, 8) != 0) throw ParseError("not a checkpoint file (bad magic)", 0);
  Checkpoint c;
  const std::size_t kind_at = in.pos();
  const auto kind = in.pod<std::uint8_t>("kind");
  if (kind > 1) throw ParseError("checkpoint: unknown kind", kind_at);
  c.kind = static_cast<CheckpointKind>(kind);
  c.config_hash = in.pod<std::uint64_t>("config_hash");
  c.epoch = in.pod<std::uint32_t>("epoch");
  c.meta = in.str(in.pod<std::uint32_t>("meta length"), "meta");
  c.rng_state = in.str(in.pod<std::uint32_t>("rng length"), "rng state");
  const auto n = in.pod<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = in.str(in.pod<std::uint16_t>("name length"), "tensor name");
    const std::size_t dtype_at = in.pos();
    const auto dtype = dtype_from(in.pod<std::uint8_t>("dtype"), dtype_at);
    const auto ndim = in.pod<std::uint8_t>("ndim");
    std::vector<std::int64_t> dims(ndim);
    std::int64_t numel = 1;
    for (auto& d : dims) {
      d = in.pod<std::int64_t>("dims");
      if (d < 0) throw ParseError("checkpoint: negative dimension", in.pos() - 8);
      numel *= d;
    }
    auto t = torch::empty(dims, dtype);
    const std::size_t nbytes = static_cast<std::size_t>(numel) * t.element_size();
    if (nbytes > in.remaining()) throw ParseError("checkpoint: truncated tensor '" + name + "'", in.pos());
    in.raw(t.data_ptr(), nbytes, "tensor data");
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (in.remaining() != 0) throw ParseError("checkpoint: trailing bytes", in.pos());
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint not found: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint make_checkpoint(CheckpointKind kind, const torch::nn::Module& model, const ModelConfig& cfg,
                           int adapter_kernel, std::uint32_t epoch, const std::string& rng_state,
                           const torch::optim::AdamW* optimizer) {
  Checkpoint c;
  c.kind = kind;
  c.meta = checkpoint_meta(cfg, adapter_kernel);
  c.config_hash = model_config_hash(cfg);
  c.epoch = epoch;
  c.rng_state = rng_state;
  for (const auto& [name, t] : named_state(model)) c.tensors.emplace_back(name, t.detach().clone());
  if (optimizer) {
    const auto& state = optimizer->state();
    for (const auto& p : model.named_parameters()) {
      auto it = state.find(p.value().unsafeGetTensorImpl());
      if (it == state.end()) continue;
      const auto& s = static_cast<const torch::optim::AdamWParamState&>(*it->second);
      c.tensors.emplace_back("optim/" + p.key() + "/exp_avg", s.exp_avg().clone());
      c.tensors.emplace_back("optim/" + p.key() + "/exp_avg_sq", s.exp_avg_sq().clone());
      c.tensors.emplace_back("optim/" + p.key() + "/step", torch::tensor({s.step()}, torch::kInt64));
    }
  }
  return c;
}

void restore_model(torch::nn::Module& model, const Checkpoint& ckpt) {
  std::map<std::string, const torch::Tensor*> by_name;
  for (const auto& [name, t] : ckpt.tensors) by_name[name] = &t;
  torch::NoGradGuard ng;
  for (auto& [name, t] : named_state(model)) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError("checkpoint lacks tensor '" + name + "'");
    if (it->second->sizes() != t.sizes())
      throw ConfigError("checkpoint tensor '" + name + "' has a different shape than the configured model");
    t.copy_(*it->second);
  }
}

void restore_optimizer(torch::optim::AdamW& optimizer, const torch::nn::Module& model, const Checkpoint& ckpt) {
  std::map<std::string, const torch::Tensor*> by_name;
  for (const auto& [name, t] : ckpt.tensors) by_name[name] = &t;
  for (const auto& p : model.named_parameters()) {
    auto avg = by_name.find("optim/" + p.key() + "/exp_avg");
    if (avg == by_name.end()) continue;
    auto state = std::make_unique<torch::optim::AdamWParamState>();
    state->exp_avg(avg->second->clone());
    state->exp_avg_sq(by_name.at("optim/" + p.key() + "/exp_avg_sq")->clone());
    state->step(by_name.at("optim/" + p.key() + "/step")->item<std::int64_t>());
    optimizer.state()[p.value().unsafeGetTensorImpl()] = std::move(state);
  }
}

TeacherNet load_teacher(const Checkpoint& ckpt) {
  if (ckpt.kind != CheckpointKind::kTeacher) throw ConfigError("checkpoint is not a teacher checkpoint");
  const ModelConfig cfg = ckpt.model_config();
  if (model_config_hash(cfg) != ckpt.config_hash) throw ConfigError("checkpoint config hash does not match its metadata");
  TeacherNet net(cfg);
  restore_model(*net, ckpt);
  return net;
}

StudentNet load_student(const Checkpoint& ckpt) {
  if (ckpt.kind != CheckpointKind::kStudent) throw ConfigError("checkpoint is not a student checkpoint");
  const ModelConfig cfg = ckpt.model_config();
  if (model_config_hash(cfg) != ckpt.config_hash) throw ConfigError("checkpoint config hash does not match its metadata");
  DistillConfig d;
  d.adapter_kernel = ckpt.adapter_kernel();
  StudentNet net(cfg, d);
  restore_model(*net, ckpt);
  return net;
}

}  // namespace sckd
