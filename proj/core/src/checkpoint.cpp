#include "veta/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace veta {

namespace {

constexpr char kMagic[4] = {'V', 'E', 'T', 'A'};

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
    std::string& buffer() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& data, std::string path) : data_(data), path_(std::move(path)) {}

    void need(std::size_t n) const {
        if (n > data_.size() - pos_) throw CorruptFile("checkpoint " + path_ + " is truncated");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == data_.size(); }
    const std::string& path() const { return path_; }

private:
    const std::string& data_;
    std::string path_;
    std::size_t pos_ = 0;
};

}  // namespace

void write_sections(const std::string& path, const std::vector<CheckpointSection>& sections) {
    Writer w;
    w.bytes(kMagic, 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(sections.size()));
    for (const auto& s : sections) {
        w.u32(static_cast<std::uint32_t>(s.name.size()));
        w.bytes(s.name.data(), s.name.size());
        w.u8(static_cast<std::uint8_t>(s.kind));
        if (s.kind == CheckpointSection::Kind::Text) {
            w.u64(s.text.size());
            w.bytes(s.text.data(), s.text.size());
        } else {
            std::uint64_t count = 1;
            for (auto d : s.dims) count *= d;
            if (count != s.values.size()) throw ShapeMismatch("write_sections: dims do not match value count");
            w.u64(4 + 8 * s.dims.size() + 4 * s.values.size());
            w.u32(static_cast<std::uint32_t>(s.dims.size()));
            for (auto d : s.dims) w.u64(d);
            for (float f : s.values) w.f32(f);
        }
    }
    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw IoError("failed writing " + path);
}

std::vector<CheckpointSection> read_sections(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string data = ss.str();
    Reader r(data, path);
    if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0) {
        throw CorruptFile(path + " is not a checkpoint (bad magic)");
    }
    r.str(4);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw VersionMismatch(path + ": checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
    }
    const std::uint32_t count = r.u32();
    std::vector<CheckpointSection> out;
    for (std::uint32_t k = 0; k < count; ++k) {
        CheckpointSection s;
        s.name = r.str(r.u32());
        const std::uint8_t kind = r.u8();
        const std::uint64_t len = r.u64();
        r.need(len);
        const std::size_t end = r.pos() + len;
        if (kind == 0) {
            s.kind = CheckpointSection::Kind::Text;
            s.text = r.str(len);
        } else if (kind == 1) {
            s.kind = CheckpointSection::Kind::Array;
            const std::uint32_t rank = r.u32();
            std::uint64_t n = 1;
            for (std::uint32_t d = 0; d < rank; ++d) {
                s.dims.push_back(r.u64());
                n *= s.dims.back();
            }
            if (4 + 8 * static_cast<std::uint64_t>(rank) + 4 * n != len) {
                throw CorruptFile(path + ": section '" + s.name + "' has inconsistent length");
            }
            s.values.resize(n);
            for (auto& v : s.values) v = r.f32();
        } else {
            throw CorruptFile(path + ": section '" + s.name + "' has unknown kind " + std::to_string(kind));
        }
        if (r.pos() != end) throw CorruptFile(path + ": section '" + s.name + "' has inconsistent length");
        out.push_back(std::move(s));
    }
    if (!r.done()) throw CorruptFile(path + ": trailing bytes after the last section");
    return out;
}

namespace {

CheckpointSection text_section(std::string name, std::string text) {
    CheckpointSection s;
    s.name = std::move(name);
    s.text = std::move(text);
    return s;
}

CheckpointSection array_section(std::string name, const double* data, std::uint64_t rows, std::uint64_t cols) {
    CheckpointSection s;
    s.name = std::move(name);
    s.kind = CheckpointSection::Kind::Array;
    s.dims = {rows, cols};
    s.values.resize(rows * cols);
    for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] = static_cast<float>(data[i]);
    return s;
}

CheckpointSection vector_section(std::string name, const Eigen::VectorXd& v) {
    return array_section(std::move(name), v.data(), static_cast<std::uint64_t>(v.size()), 1);
}

std::map<std::string, std::string> parse_kv(const std::string& text, const std::string& path) {
    std::map<std::string, std::string> m;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw CorruptFile(path + ": malformed meta line '" + line + "'");
        m[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
    std::vector<CheckpointSection> sections;
    sections.push_back(text_section("config", model.config.to_text()));

    const TrainState& st = model.state;
    std::ostringstream meta;
    meta << "iteration=" << st.iteration << "\n";
    std::ostringstream rng;
    rng << st.rng;
    meta << "rng=" << rng.str() << "\n";
    meta << "sh_degree=" << model.cloud.sh_degree << "\n";
    meta << "tfe_seed=" << model.config.tfe_seed << "\n";
    for (std::size_t f = 0; f < 5; ++f) {
        meta << "adam_step." << GaussianCloud::kFieldNames[f] << "=" << st.gaussian_adam.fields[f].step << "\n";
    }
    meta << "adam_step.net=" << st.net_adam.step << "\n";
    if (model.intrinsics) {
        const Intrinsics& k = *model.intrinsics;
        char buf[256];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%d,%d", k.fx, k.fy, k.cx, k.cy, k.width, k.height);
        meta << "intrinsics=" << buf << "\n";
    }
    meta << "view_cursor=" << st.view_cursor << "\n";
    meta << "view_order=";
    for (std::size_t i = 0; i < st.view_order.size(); ++i) meta << (i ? "," : "") << st.view_order[i];
    meta << "\n";
    sections.push_back(text_section("meta", meta.str()));

    model.cloud.for_each_field([&](std::string_view name, const ParamBlock& b) {
        sections.push_back(array_section("cloud." + std::string(name), b.data(), static_cast<std::uint64_t>(b.rows()),
                                         static_cast<std::uint64_t>(b.cols())));
    });
    sections.push_back(vector_section("net.params", model.net.parameters()));
    for (std::size_t f = 0; f < 5; ++f) {
        const std::string base = "adam." + std::string(GaussianCloud::kFieldNames[f]);
        sections.push_back(vector_section(base + ".m", st.gaussian_adam.fields[f].m));
        sections.push_back(vector_section(base + ".v", st.gaussian_adam.fields[f].v));
    }
    sections.push_back(vector_section("adam.net.m", st.net_adam.m));
    sections.push_back(vector_section("adam.net.v", st.net_adam.v));
    sections.push_back(vector_section("stats.grad_accum", st.grad_accum));
    sections.push_back(vector_section("stats.grad_count", st.grad_count));
    write_sections(path, sections);
}

Model load_checkpoint(const std::string& path) {
    const auto sections = read_sections(path);
    std::map<std::string, const CheckpointSection*> by_name;
    for (const auto& s : sections) by_name[s.name] = &s;
    auto get = [&](const std::string& name, CheckpointSection::Kind kind) -> const CheckpointSection& {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw CorruptFile(path + ": missing section '" + name + "'");
        if (it->second->kind != kind) throw CorruptFile(path + ": section '" + name + "' has the wrong kind");
        return *it->second;
    };
    auto get_array = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        const auto& s = get(name, CheckpointSection::Kind::Array);
        if (s.dims.size() != 2 || s.dims[0] != static_cast<std::uint64_t>(rows) ||
            s.dims[1] != static_cast<std::uint64_t>(cols)) {
            throw CorruptFile(path + ": section '" + name + "' has unexpected shape");
        }
        ParamBlock out(rows, cols);
        for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = static_cast<double>(s.values[static_cast<std::size_t>(i)]);
        return out;
    };
    auto get_vector = [&](const std::string& name, Eigen::Index n) -> Eigen::VectorXd {
        return get_array(name, n, 1).col(0);
    };

    Model m;
    try {
        m.config = TrainConfig::parse_text(get("config", CheckpointSection::Kind::Text).text);
        m.config.validate();
    } catch (const ConfigError& e) {
        throw CorruptFile(path + ": invalid config section: " + e.what());
    }
    const auto meta = parse_kv(get("meta", CheckpointSection::Kind::Text).text, path);
    auto meta_at = [&](const std::string& key) -> const std::string& {
        auto it = meta.find(key);
        if (it == meta.end()) throw CorruptFile(path + ": meta key '" + key + "' missing");
        return it->second;
    };

    try {
        const auto& pos = get("cloud.positions", CheckpointSection::Kind::Array);
        if (pos.dims.size() != 2) throw CorruptFile(path + ": cloud.positions must be 2-D");
        const auto n = static_cast<Eigen::Index>(pos.dims[0]);
        const int degree = std::stoi(meta_at("sh_degree"));
        if (degree < 0 || degree > kMaxShDegree) throw CorruptFile(path + ": invalid sh_degree");
        m.cloud.sh_degree = degree;
        m.cloud.positions = get_array("cloud.positions", n, 3);
        m.cloud.rotations = get_array("cloud.rotations", n, 4);
        m.cloud.log_scales = get_array("cloud.log_scales", n, 3);
        m.cloud.opacity_logits = get_array("cloud.opacity_logits", n, 1);
        m.cloud.sh_coeffs = get_array("cloud.sh_coeffs", n, sh_coeff_count(degree));

        m.net = DeformationNet(m.config.net);
        m.net.parameters() = get_vector("net.params", static_cast<Eigen::Index>(m.net.parameter_count()));
        m.tfe = ThermalFeatureExtractor::make(std::stoull(meta_at("tfe_seed")));

        TrainState& st = m.state;
        st.iteration = std::stol(meta_at("iteration"));
        std::istringstream rng(meta_at("rng"));
        rng >> st.rng;
        if (!rng) throw CorruptFile(path + ": invalid RNG state");
        const std::array<Eigen::Index, 5> widths = {3, 4, 3, 1, sh_coeff_count(degree)};
        for (std::size_t f = 0; f < 5; ++f) {
            const std::string base = "adam." + std::string(GaussianCloud::kFieldNames[f]);
            AdamState& a = st.gaussian_adam.fields[f];
            a.m = get_vector(base + ".m", n * widths[f]);
            a.v = get_vector(base + ".v", n * widths[f]);
            a.step = std::stol(meta_at("adam_step." + std::string(GaussianCloud::kFieldNames[f])));
        }
        const auto np = static_cast<Eigen::Index>(m.net.parameter_count());
        st.net_adam.m = get_vector("adam.net.m", np);
        st.net_adam.v = get_vector("adam.net.v", np);
        st.net_adam.step = std::stol(meta_at("adam_step.net"));
        st.grad_accum = get_vector("stats.grad_accum", n);
        st.grad_count = get_vector("stats.grad_count", n);
        st.view_cursor = std::stoull(meta_at("view_cursor"));
        std::stringstream order(meta_at("view_order"));
        std::string tok;
        while (std::getline(order, tok, ',')) st.view_order.push_back(static_cast<std::uint32_t>(std::stoul(tok)));
        if (st.view_cursor > st.view_order.size()) throw CorruptFile(path + ": view cursor out of range");
        if (auto it = meta.find("intrinsics"); it != meta.end()) {
            std::stringstream ks(it->second);
            std::array<std::string, 6> f;
            for (auto& part : f) {
                if (!std::getline(ks, part, ',')) throw CorruptFile(path + ": malformed intrinsics");
            }
            m.intrinsics = Intrinsics{std::stod(f[0]), std::stod(f[1]), std::stod(f[2]),
                                      std::stod(f[3]), std::stoi(f[4]), std::stoi(f[5])};
        }
    } catch (const std::logic_error& e) {
        throw CorruptFile(path + ": malformed meta value (" + e.what() + ")");
    } catch (const InvalidParameter& e) {
        throw CorruptFile(path + ": " + e.what());
    }
    try {
        m.cloud.validate();
    } catch (const InvalidParameter& e) {
        throw CorruptFile(path + ": " + e.what());
    }
    return m;
}

}  // namespace veta
