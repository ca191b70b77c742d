#include "poolgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "poolgen/config.hpp"

namespace poolgen {

namespace {

constexpr char kMagic[8] = {'P', 'O', 'O', 'L', 'G', 'E', 'N', 'C'};
constexpr std::uint8_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void f64_vec(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i]))
           << (8 * i);
    }
    return v;
  }
  std::uint64_t u64() {
    const char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i]))
           << (8 * i);
    }
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t len = u32();
    const char* p = take(len);
    return std::string(p, len);
  }
  std::vector<double> f64_vec() {
    const std::uint64_t len = u64();
    if (len > (buf_.size() - pos_) / 8) {
      throw CheckpointError("corrupt checkpoint: truncated payload");
    }
    std::vector<double> v(len);
    for (double& x : v) x = f64();
    return v;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  const char* take(std::size_t n) {
    if (pos_ + n > buf_.size()) {
      throw CheckpointError("corrupt checkpoint: truncated payload");
    }
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  Writer w;
  w.str(ck.arch);
  w.u32(static_cast<std::uint32_t>(ck.in_c));
  w.u32(static_cast<std::uint32_t>(ck.in_h));
  w.u32(static_cast<std::uint32_t>(ck.in_w));
  w.u64(ck.seed);
  w.u64(ck.step);
  w.u32(ck.epoch);
  w.f64(ck.momentum);
  w.f64(ck.weight_decay);
  w.u32(ck.patience);
  w.f64_vec(ck.lr_rates);
  w.u32(ck.lr_index);
  w.u32(ck.lr_stale);
  w.f64(ck.lr_best);
  w.u8(ck.lr_finished ? 1 : 0);
  w.f64(ck.pool_init_std);
  w.f64_vec(ck.channel_means);
  w.u32(static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& [name, payload] : ck.params) {
    w.str(name);
    w.f64_vec(payload);
  }
  w.u32(static_cast<std::uint32_t>(ck.velocity.size()));
  for (const auto& payload : ck.velocity) w.f64_vec(payload);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  out.put(static_cast<char>(kVersion));
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw CheckpointError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + 1 ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointVersionError("not a checkpoint file: bad magic");
  }
  const std::uint8_t version =
      static_cast<std::uint8_t>(bytes[sizeof(kMagic)]);
  if (version != kVersion) {
    throw CheckpointVersionError("unsupported checkpoint version " +
                                 std::to_string(version));
  }
  Reader r(bytes.substr(sizeof(kMagic) + 1));
  Checkpoint ck;
  ck.arch = r.str();
  ck.in_c = static_cast<int>(r.u32());
  ck.in_h = static_cast<int>(r.u32());
  ck.in_w = static_cast<int>(r.u32());
  ck.seed = r.u64();
  ck.step = r.u64();
  ck.epoch = r.u32();
  ck.momentum = r.f64();
  ck.weight_decay = r.f64();
  ck.patience = r.u32();
  ck.lr_rates = r.f64_vec();
  ck.lr_index = r.u32();
  ck.lr_stale = r.u32();
  ck.lr_best = r.f64();
  ck.lr_finished = r.u8() != 0;
  ck.pool_init_std = r.f64();
  ck.channel_means = r.f64_vec();
  const std::uint32_t n_params = r.u32();
  ck.params.reserve(n_params);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    ck.params.emplace_back(std::move(name), r.f64_vec());
  }
  const std::uint32_t n_vel = r.u32();
  ck.velocity.reserve(n_vel);
  for (std::uint32_t i = 0; i < n_vel; ++i) ck.velocity.push_back(r.f64_vec());
  if (!r.at_end()) {
    throw CheckpointError("corrupt checkpoint: trailing bytes");
  }
  return ck;
}

Checkpoint snapshot(Network& net, const SgdOptimizer& opt,
                    std::uint32_t epoch,
                    const std::vector<double>& channel_means,
                    double pool_init_std) {
  Checkpoint ck;
  ck.arch = net.arch();
  ck.in_c = net.input_shape().c;
  ck.in_h = net.input_shape().h;
  ck.in_w = net.input_shape().w;
  ck.seed = net.seed();
  ck.step = net.step();
  ck.epoch = epoch;
  ck.momentum = opt.momentum();
  ck.weight_decay = opt.weight_decay();
  ck.patience = static_cast<std::uint32_t>(opt.schedule().patience());
  ck.lr_rates = opt.schedule().rates();
  ck.lr_index = static_cast<std::uint32_t>(opt.schedule().index());
  ck.lr_stale = static_cast<std::uint32_t>(opt.schedule().stale());
  ck.lr_best = opt.schedule().best();
  ck.lr_finished = opt.schedule().finished();
  ck.pool_init_std = pool_init_std;
  ck.channel_means = channel_means;
  for (const ParamSlot& s : net.param_slots()) {
    ck.params.emplace_back(s.name,
                           std::vector<double>(s.value.begin(), s.value.end()));
  }
  ck.velocity = opt.velocity();
  return ck;
}

RestoredState restore_checkpoint(const Checkpoint& ck) {
  const std::vector<LayerSpec> arch = parse_arch(ck.arch);
  Network net = Network::build(arch, {1, ck.in_c, ck.in_h, ck.in_w}, ck.seed,
                               ck.pool_init_std);
  net.set_step(ck.step);
  std::vector<ParamSlot> slots = net.param_slots();
  if (slots.size() != ck.params.size()) {
    throw CheckpointError("checkpoint parameter manifest does not match "
                          "architecture");
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& [name, payload] = ck.params[i];
    if (slots[i].name != name || slots[i].value.size() != payload.size()) {
      throw CheckpointError("checkpoint parameter " + name +
                            " does not match slot " + slots[i].name);
    }
    std::copy(payload.begin(), payload.end(), slots[i].value.begin());
  }
  LrSchedule sched(ck.lr_rates, static_cast<int>(ck.patience));
  sched.restore(ck.lr_index, static_cast<int>(ck.lr_stale), ck.lr_best,
                ck.lr_finished);
  SgdOptimizer opt(ck.momentum, ck.weight_decay, std::move(sched));
  if (!ck.velocity.empty()) {
    if (ck.velocity.size() != slots.size()) {
      throw CheckpointError("checkpoint velocity manifest does not match "
                            "architecture");
    }
    opt.velocity() = ck.velocity;
  }
  return {std::move(net), std::move(opt), ck.epoch, ck.channel_means,
          ck.pool_init_std};
}

}  // namespace poolgen
