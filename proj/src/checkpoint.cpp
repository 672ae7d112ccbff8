#include "deocc/checkpoint.hpp"

#include <filesystem>

#include "deocc/errors.hpp"

namespace deocc {

namespace {

// libtorch keys optimizer state by TensorImpl address, which makes checkpoint
// bytes differ between identical runs. State is written by parameter index instead.
void save_optimizer(torch::serialize::OutputArchive& ar, torch::optim::Optimizer& opt) {
    std::vector<torch::Tensor> params;
    for (auto& g : opt.param_groups())
        for (auto& p : g.params()) params.push_back(p);
    ar.write("count", torch::tensor(static_cast<int64_t>(params.size())));
    auto& state = opt.state();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto it = state.find(params[i].unsafeGetTensorImpl());
        if (it == state.end()) continue;
        const auto key = "p" + std::to_string(i) + "/";
        if (auto* s = dynamic_cast<torch::optim::SGDParamState*>(it->second.get())) {
            ar.write(key + "momentum_buffer", s->momentum_buffer());
        } else if (auto* a = dynamic_cast<torch::optim::AdamParamState*>(it->second.get())) {
            ar.write(key + "step", torch::tensor(a->step()));
            ar.write(key + "exp_avg", a->exp_avg());
            ar.write(key + "exp_avg_sq", a->exp_avg_sq());
            if (a->max_exp_avg_sq().defined()) ar.write(key + "max_exp_avg_sq", a->max_exp_avg_sq());
        } else {
            throw ContractError("save_checkpoint: unsupported optimizer state");
        }
    }
}

void load_optimizer(torch::serialize::InputArchive& ar, torch::optim::Optimizer& opt) {
    std::vector<torch::Tensor> params;
    for (auto& g : opt.param_groups())
        for (auto& p : g.params()) params.push_back(p);
    torch::Tensor count;
    ar.read("count", count);
    if (count.item<int64_t>() != static_cast<int64_t>(params.size()))
        throw ConfigError("optimizer state does not match the parameter count");
    const bool is_sgd = dynamic_cast<torch::optim::SGD*>(&opt) != nullptr;
    auto& state = opt.state();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto key = "p" + std::to_string(i) + "/";
        torch::Tensor t;
        if (is_sgd) {
            if (!ar.try_read(key + "momentum_buffer", t)) continue;
            auto s = std::make_unique<torch::optim::SGDParamState>();
            s->momentum_buffer(t);
            state[params[i].unsafeGetTensorImpl()] = std::move(s);
        } else {
            if (!ar.try_read(key + "step", t)) continue;
            auto s = std::make_unique<torch::optim::AdamParamState>();
            s->step(t.item<int64_t>());
            torch::Tensor m, v, vmax;
            ar.read(key + "exp_avg", m);
            ar.read(key + "exp_avg_sq", v);
            s->exp_avg(m);
            s->exp_avg_sq(v);
            if (ar.try_read(key + "max_exp_avg_sq", vmax)) s->max_exp_avg_sq(vmax);
            state[params[i].unsafeGetTensorImpl()] = std::move(s);
        }
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const NamedModules& modules, nlohmann::json meta,
                     torch::optim::Optimizer* optimizer) {
    meta["checkpoint_version"] = kCheckpointVersion;
    torch::serialize::OutputArchive ar;
    for (const auto& [name, m] : modules) {
        torch::serialize::OutputArchive sub;
        m->save(sub);
        ar.write(name, sub);
    }
    if (optimizer) {
        torch::serialize::OutputArchive sub;
        save_optimizer(sub, *optimizer);
        ar.write("optimizer", sub);
    }
    ar.write("meta", c10::IValue(meta.dump()));
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    ar.save_to(path);
}

nlohmann::json read_checkpoint_meta(const std::string& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("checkpoint not found: " + path);
    torch::serialize::InputArchive ar;
    ar.load_from(path);
    c10::IValue v;
    if (!ar.try_read("meta", v)) throw ConfigError("checkpoint has no metadata: " + path);
    auto meta = nlohmann::json::parse(v.toStringRef());
    if (meta.value("checkpoint_version", -1) != kCheckpointVersion)
        throw ConfigError("checkpoint version mismatch in " + path);
    return meta;
}

nlohmann::json load_checkpoint(const std::string& path, const NamedModules& modules) {
    auto meta = read_checkpoint_meta(path);
    torch::serialize::InputArchive ar;
    ar.load_from(path);
    for (const auto& [name, m] : modules) {
        torch::serialize::InputArchive sub;
        if (!ar.try_read(name, sub)) throw ConfigError("checkpoint " + path + " lacks module '" + name + "'");
        m->load(sub);
    }
    return meta;
}

bool load_optimizer_state(const std::string& path, torch::optim::Optimizer& optimizer) {
    torch::serialize::InputArchive ar;
    ar.load_from(path);
    torch::serialize::InputArchive sub;
    if (!ar.try_read("optimizer", sub)) return false;
    load_optimizer(sub, optimizer);
    return true;
}

void copy_parameters(const torch::nn::Module& src, torch::nn::Module& dst) {
    torch::NoGradGuard g;
    auto sp = src.named_parameters(true);
    auto dp = dst.named_parameters(true);
    require(sp.size() == dp.size(), "copy_parameters: parameter count mismatch");
    for (const auto& item : sp) {
        auto* d = dp.find(item.key());
        require(d != nullptr && d->sizes() == item.value().sizes(), "copy_parameters: mismatch at " + item.key());
        d->copy_(item.value());
    }
    auto sb = src.named_buffers(true);
    auto db = dst.named_buffers(true);
    for (const auto& item : sb)
        if (auto* d = db.find(item.key())) d->copy_(item.value());
}

}  // namespace deocc
