#include "phyvae/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "phyvae/errors.hpp"

namespace phyvae {

namespace {
constexpr const char* kMagic = "phyvae-checkpoint";
constexpr int kVersion = 1;
}  // namespace

Checkpoint make_checkpoint(const ParameterSet& params, std::string variant, std::string config_hash) {
    Checkpoint c{std::move(variant), std::move(config_hash), {}};
    for (std::size_t i = 0; i < params.size(); ++i) c.tensors.emplace_back(params.path(i), params.value(i));
    return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path);
    if (!out) throw DataError(0, "cannot write " + path.string());
    out << kMagic << ' ' << kVersion << '\n';
    out << "variant " << ckpt.variant << '\n';
    out << "config_hash " << ckpt.config_hash << '\n';
    out << "tensors " << ckpt.tensors.size() << '\n';
    char buf[40];
    for (const auto& [name, t] : ckpt.tensors) {
        out << "tensor " << name << ' ' << t.rank();
        for (std::size_t d : t.shape()) out << ' ' << d;
        out << '\n';
        for (std::size_t i = 0; i < t.numel(); ++i) {
            std::snprintf(buf, sizeof buf, "%a", t[i]);
            out << (i ? " " : "") << buf;
        }
        out << '\n';
    }
    if (!out) throw DataError(0, "failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(0, "cannot open " + path.string());
    std::size_t line_no = 0;
    std::string line;
    auto next = [&]() -> std::istringstream {
        if (!std::getline(in, line)) throw DataError(line_no + 1, "unexpected end of checkpoint");
        ++line_no;
        return std::istringstream(line);
    };
    Checkpoint c;
    std::string word;
    int version = 0;
    if (!(next() >> word >> version) || word != kMagic || version != kVersion)
        throw DataError(line_no, "not a checkpoint file");
    if (!(next() >> word >> c.variant) || word != "variant") throw DataError(line_no, "expected variant");
    if (!(next() >> word >> c.config_hash) || word != "config_hash") throw DataError(line_no, "expected config_hash");
    std::size_t count = 0;
    if (!(next() >> word >> count) || word != "tensors") throw DataError(line_no, "expected tensor count");
    for (std::size_t k = 0; k < count; ++k) {
        auto head = next();
        std::string name;
        std::size_t rank = 0;
        if (!(head >> word >> name >> rank) || word != "tensor") throw DataError(line_no, "expected tensor header");
        Shape shape(rank);
        for (auto& d : shape)
            if (!(head >> d)) throw DataError(line_no, "bad shape for " + name);
        next();
        std::vector<double> values;
        values.reserve(shape_numel(shape));
        const char* p = line.c_str();
        while (true) {
            while (*p == ' ') ++p;
            if (!*p) break;
            char* end = nullptr;
            values.push_back(std::strtod(p, &end));
            if (end == p) throw DataError(line_no, "bad value in " + name);
            p = end;
        }
        if (values.size() != shape_numel(shape))
            throw DataError(line_no, name + ": expected " + std::to_string(shape_numel(shape)) + " values");
        c.tensors.emplace_back(name, Tensor(shape, std::move(values)));
    }
    return c;
}

void load_parameters(const Checkpoint& ckpt, ParameterSet& params) {
    if (ckpt.tensors.size() != params.size())
        throw DataError(0, "checkpoint has " + std::to_string(ckpt.tensors.size()) + " tensors, model has " +
                               std::to_string(params.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        const std::size_t i = params.find(name);
        if (i == params.size()) throw DataError(0, "checkpoint tensor " + name + " has no model parameter");
        if (params.value(i).shape() != t.shape())
            throw DataError(0, name + ": checkpoint shape " + shape_string(t.shape()) + ", model " +
                                   shape_string(params.value(i).shape()));
        params.value(i) = t;
    }
}

}  // namespace phyvae
