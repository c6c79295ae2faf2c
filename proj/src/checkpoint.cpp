#include "fdl/checkpoint.hpp"

#include <map>
#include <sstream>

#include "fdl/errors.hpp"
#include "fdl/io_util.hpp"

namespace fdl {

namespace {

std::string role_of(const std::string& name) {
    const auto dot = name.rfind('.');
    const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
    if (leaf == "weight" || leaf == "bias" || leaf == "gamma" || leaf == "beta" ||
        leaf == "alpha") {
        return leaf;
    }
    return "tensor";
}

std::string file_of(const std::string& name) { return name + ".fdlt"; }

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoull(item));
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ToyNet& net) {
    std::filesystem::create_directories(dir);

    std::ostringstream manifest;
    for (const auto& [name, p] : net.named_params()) {
        write_fdlt(dir / file_of(name), p->value);
        manifest << name << " ";
        const Shape& s = p->value.shape;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) manifest << "x";
            manifest << s[i];
        }
        manifest << " " << role_of(name) << "\n";
    }
    atomic_write_bytes(dir / "manifest.txt", manifest.str());

    const ToyNetConfig& cfg = net.config();
    std::ostringstream config;
    config << "input_size=" << cfg.input_size << "\n";
    config << "backbone_widths=" << join_sizes(cfg.backbone_widths) << "\n";
    config << "ppm_bins=" << join_sizes(cfg.ppm_bins) << "\n";
    config << "ppm_branch_channels=" << cfg.ppm_branch_channels << "\n";
    config << "context_channels=" << cfg.context_channels << "\n";
    config << "fusion_channels=" << cfg.fusion_channels << "\n";
    config << "block_size=" << cfg.block_size << "\n";
    config << "classes=" << cfg.classes << "\n";
    config << "variant=" << cfg.variant.str() << "\n";
    config << "init_seed=" << net.init_seed() << "\n";
    atomic_write_bytes(dir / "config.txt", config.str());
}

ToyNet load_checkpoint(const std::filesystem::path& dir) {
    std::map<std::string, std::string> kv;
    {
        std::istringstream in(read_bytes(dir / "config.txt"));
        std::string line;
        while (std::getline(in, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) {
            throw FormatError("checkpoint config missing key '" + key + "' in " +
                              (dir / "config.txt").string());
        }
        return it->second;
    };

    ToyNetConfig cfg;
    cfg.input_size = std::stoull(need("input_size"));
    cfg.backbone_widths = split_sizes(need("backbone_widths"));
    cfg.ppm_bins = split_sizes(need("ppm_bins"));
    cfg.ppm_branch_channels = std::stoull(need("ppm_branch_channels"));
    cfg.context_channels = std::stoull(need("context_channels"));
    cfg.fusion_channels = std::stoull(need("fusion_channels"));
    cfg.block_size = std::stoull(need("block_size"));
    cfg.classes = std::stoull(need("classes"));
    cfg.variant = parse_variant(need("variant"));
    const std::uint64_t init_seed = std::stoull(need("init_seed"));

    ToyNet net(cfg, init_seed);
    for (const auto& [name, p] : net.named_params()) {
        Tensor loaded = read_fdlt(dir / file_of(name));
        if (loaded.shape != p->value.shape) {
            throw FormatError("checkpoint tensor '" + name + "' has shape " +
                              shape_str(loaded.shape) + ", expected " +
                              shape_str(p->value.shape));
        }
        p->value = std::move(loaded);
    }
    return net;
}

}  // namespace fdl
