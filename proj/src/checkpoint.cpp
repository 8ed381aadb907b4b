#include "ganlab/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "ganlab/error.hpp"
#include "ganlab/idx.hpp"

namespace ganlab {

namespace {

constexpr char kMagic[4] = {'G', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxElements = 1ull << 40;

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
  public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::size_t offset() const { return off_; }
    bool done() const { return off_ == bytes_.size(); }

    std::uint8_t u8() {
        need(1);
        return bytes_[off_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[off_ + i]) << (8 * i);
        off_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[off_ + i]) << (8 * i);
        off_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t len) {
        need(len);
        std::string s(reinterpret_cast<const char*>(bytes_.data()) + off_, len);
        off_ += len;
        return s;
    }

  private:
    void need(std::size_t n) {
        if (bytes_.size() - off_ < n)
            throw ParseError("checkpoint truncated at offset " + std::to_string(off_));
    }
    const std::vector<std::uint8_t>& bytes_;
    std::size_t off_ = 0;
};

void put_spec(std::vector<std::uint8_t>& out, const NetworkSpec& s) {
    put_u32(out, static_cast<std::uint32_t>(s.sizes.size()));
    for (std::size_t v : s.sizes) put_u64(out, v);
    put_u8(out, static_cast<std::uint8_t>(s.role));
    put_u8(out, static_cast<std::uint8_t>(s.head));
    put_u8(out, s.batchnorm ? 1 : 0);
    put_u8(out, s.spectral_norm ? 1 : 0);
    put_u8(out, static_cast<std::uint8_t>(s.hidden_act));
    put_u8(out, static_cast<std::uint8_t>(s.output_act));
    put_f64(out, s.init_std);
    put_f64(out, s.leaky_slope);
    put_u64(out, s.spectral_warmup);
}

Activation read_activation(Reader& r) {
    std::uint8_t v = r.u8();
    if (v > 3)
        throw ParseError("checkpoint has unknown activation code " + std::to_string(v) +
                         " at offset " + std::to_string(r.offset() - 1));
    return static_cast<Activation>(v);
}

NetworkSpec read_spec(Reader& r) {
    NetworkSpec s;
    std::uint32_t n = r.u32();
    if (n < 2 || n > 64)
        throw ParseError("checkpoint layer count " + std::to_string(n) +
                         " out of range at offset " + std::to_string(r.offset() - 4));
    s.sizes.resize(n);
    for (auto& v : s.sizes) {
        std::uint64_t raw = r.u64();
        if (raw == 0 || raw > kMaxElements)
            throw ParseError("checkpoint layer size out of range at offset " +
                             std::to_string(r.offset() - 8));
        v = static_cast<std::size_t>(raw);
    }
    std::uint8_t role = r.u8();
    if (role > 1)
        throw ParseError("checkpoint has unknown role code " + std::to_string(role) +
                         " at offset " + std::to_string(r.offset() - 1));
    s.role = static_cast<Role>(role);
    std::uint8_t head = r.u8();
    if (head > 1)
        throw ParseError("checkpoint has unknown head code " + std::to_string(head) +
                         " at offset " + std::to_string(r.offset() - 1));
    s.head = static_cast<HeadVariant>(head);
    s.batchnorm = r.u8() != 0;
    s.spectral_norm = r.u8() != 0;
    s.hidden_act = read_activation(r);
    s.output_act = read_activation(r);
    s.init_std = r.f64();
    s.leaky_slope = r.f64();
    s.spectral_warmup = static_cast<std::size_t>(r.u64());
    return s;
}

void put_tensor(std::vector<std::uint8_t>& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (std::size_t i = 0; i < t.numel(); ++i) put_f64(out, t[i]);
}

Tensor read_tensor(Reader& r) {
    std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8)
        throw ParseError("checkpoint tensor rank " + std::to_string(rank) +
                         " out of range at offset " + std::to_string(r.offset() - 4));
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
        std::uint64_t raw = r.u64();
        if (raw == 0 || raw > kMaxElements || numel > kMaxElements / raw)
            throw ParseError("checkpoint tensor extent out of range at offset " +
                             std::to_string(r.offset() - 8));
        d = static_cast<std::size_t>(raw);
        numel *= raw;
    }
    std::vector<double> data(static_cast<std::size_t>(numel));
    for (auto& v : data) v = r.f64();
    return Tensor(std::move(shape), std::move(data));
}

std::string role_prefix(const Mlp& net) {
    return net.role == Role::Generator ? "g" : "d";
}

void collect_aux(Mlp& net, std::vector<std::pair<std::string, Tensor>>& named) {
    const std::string p = role_prefix(net);
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
        auto& block = net.blocks[i];
        const std::string base = p + ".block" + std::to_string(i);
        if (block.batchnorm) {
            named.emplace_back(base + ".running_mean", block.batchnorm->running_mean);
            named.emplace_back(base + ".running_var", block.batchnorm->running_var);
        }
        if (block.dense.spectral) named.emplace_back(base + ".u", block.dense.spectral->u());
    }
}

void collect_sampling(Mlp& g, std::vector<std::pair<std::string, Tensor>>& named) {
    for (Parameter* p : g.parameters()) named.emplace_back("sample." + p->name, p->value);
    for (std::size_t i = 0; i < g.blocks.size(); ++i) {
        auto& block = g.blocks[i];
        if (!block.batchnorm) continue;
        const std::string base = "sample." + role_prefix(g) + ".block" + std::to_string(i);
        named.emplace_back(base + ".running_mean", block.batchnorm->running_mean);
        named.emplace_back(base + ".running_var", block.batchnorm->running_var);
    }
}

void collect_adam(const AdamState& adam, const std::string& prefix,
                  std::vector<std::pair<std::string, Tensor>>& named) {
    const auto& m = adam.first_moments();
    const auto& v = adam.second_moments();
    for (std::size_t i = 0; i < m.size(); ++i) {
        named.emplace_back(prefix + ".m." + std::to_string(i), m[i]);
        named.emplace_back(prefix + ".v." + std::to_string(i), v[i]);
    }
}

void assign_checked(const Checkpoint& c, const std::string& name, Tensor& dst) {
    const Tensor& src = c.tensor(name);
    if (src.shape() != dst.shape())
        throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_str(src.shape()) +
                         ", expected " + shape_str(dst.shape()));
    dst = src;
}

void restore_one(const Checkpoint& c, Mlp& net) {
    for (Parameter* p : net.parameters()) assign_checked(c, p->name, p->value);
    const std::string prefix = role_prefix(net);
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
        auto& block = net.blocks[i];
        const std::string base = prefix + ".block" + std::to_string(i);
        if (block.batchnorm) {
            assign_checked(c, base + ".running_mean", block.batchnorm->running_mean);
            assign_checked(c, base + ".running_var", block.batchnorm->running_var);
        }
        if (block.dense.spectral) {
            Tensor u = block.dense.spectral->u();
            assign_checked(c, base + ".u", u);
            block.dense.spectral->set_u(std::move(u));
        }
    }
}

void restore_adam_one(const Checkpoint& c, const std::string& prefix, std::int64_t steps,
                      AdamState& adam) {
    auto& m = adam.first_moments();
    auto& v = adam.second_moments();
    for (std::size_t i = 0; i < m.size(); ++i) {
        assign_checked(c, prefix + ".m." + std::to_string(i), m[i]);
        assign_checked(c, prefix + ".v." + std::to_string(i), v[i]);
    }
    adam.set_steps_taken(steps);
}

}  // namespace

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, t] : named)
        if (n == name) return true;
    return false;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : named)
        if (n == name) return t;
    throw ParseError("checkpoint is missing tensor '" + name + "'");
}

Checkpoint make_checkpoint(const NetworkSpec& g_spec, Mlp& g, const NetworkSpec& d_spec,
                           Mlp& d, const AdamState& adam_g, const AdamState& adam_d,
                           std::uint64_t step, std::uint64_t config_hash,
                           std::uint64_t data_counter, std::uint64_t latent_counter,
                           Mlp* sampling_g) {
    Checkpoint c;
    c.config_hash = config_hash;
    c.step = step;
    c.data_counter = data_counter;
    c.latent_counter = latent_counter;
    c.adam_g_steps = adam_g.steps_taken();
    c.adam_d_steps = adam_d.steps_taken();
    c.g_spec = g_spec;
    c.d_spec = d_spec;
    for (Parameter* p : g.parameters()) c.named.emplace_back(p->name, p->value);
    for (Parameter* p : d.parameters()) c.named.emplace_back(p->name, p->value);
    collect_aux(g, c.named);
    collect_aux(d, c.named);
    collect_adam(adam_g, "adam.g", c.named);
    collect_adam(adam_d, "adam.d", c.named);
    collect_sampling(sampling_g ? *sampling_g : g, c.named);
    return c;
}

void restore_networks(const Checkpoint& c, Mlp& g, Mlp& d) {
    restore_one(c, g);
    restore_one(c, d);
}

void restore_adam(const Checkpoint& c, AdamState& adam_g, AdamState& adam_d) {
    restore_adam_one(c, "adam.g", c.adam_g_steps, adam_g);
    restore_adam_one(c, "adam.d", c.adam_d_steps, adam_d);
}

void restore_sampling(const Checkpoint& c, Mlp& g) {
    for (Parameter* p : g.parameters()) assign_checked(c, "sample." + p->name, p->value);
    for (std::size_t i = 0; i < g.blocks.size(); ++i) {
        auto& block = g.blocks[i];
        if (!block.batchnorm) continue;
        const std::string base = "sample." + role_prefix(g) + ".block" + std::to_string(i);
        assign_checked(c, base + ".running_mean", block.batchnorm->running_mean);
        assign_checked(c, base + ".running_var", block.batchnorm->running_var);
    }
}

Mlp rebuild_generator(const Checkpoint& c) {
    RngStream rng(0, Substream::Init);
    Mlp g = build_network(c.g_spec, rng);
    restore_sampling(c, g);
    return g;
}

Mlp rebuild_discriminator(const Checkpoint& c) {
    RngStream rng(0, Substream::Init);
    Mlp d = build_network(c.d_spec, rng);
    restore_one(c, d);
    return d;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u64(out, c.config_hash);
    put_u64(out, c.step);
    put_u64(out, c.data_counter);
    put_u64(out, c.latent_counter);
    put_u64(out, std::bit_cast<std::uint64_t>(c.adam_g_steps));
    put_u64(out, std::bit_cast<std::uint64_t>(c.adam_d_steps));
    put_spec(out, c.g_spec);
    put_spec(out, c.d_spec);
    put_u32(out, static_cast<std::uint32_t>(c.named.size()));
    for (const auto& [name, t] : c.named) put_tensor(out, name, t);
    return out;
}

Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ParseError("checkpoint has bad magic at offset 0");
    r.str(4);
    std::uint32_t version = r.u32();
    if (version != kVersion)
        throw ParseError("checkpoint has unsupported version " + std::to_string(version));
    Checkpoint c;
    c.config_hash = r.u64();
    c.step = r.u64();
    c.data_counter = r.u64();
    c.latent_counter = r.u64();
    c.adam_g_steps = std::bit_cast<std::int64_t>(r.u64());
    c.adam_d_steps = std::bit_cast<std::int64_t>(r.u64());
    c.g_spec = read_spec(r);
    c.d_spec = read_spec(r);
    std::uint32_t count = r.u32();
    c.named.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t name_len = r.u32();
        if (name_len == 0 || name_len > 4096)
            throw ParseError("checkpoint tensor name length out of range at offset " +
                             std::to_string(r.offset() - 4));
        std::string name = r.str(name_len);
        c.named.emplace_back(std::move(name), read_tensor(r));
    }
    if (!r.done())
        throw ParseError("checkpoint has " + std::to_string(bytes.size() - r.offset()) +
                         " trailing bytes at offset " + std::to_string(r.offset()));
    return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
    write_file_bytes(path, serialize_checkpoint(c));
}

Checkpoint load_checkpoint(const std::string& path) {
    try {
        return parse_checkpoint(read_file_bytes(path));
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

}  // namespace ganlab
