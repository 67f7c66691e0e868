#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsifsl/nn/adam.hpp"
#include "hsifsl/nn/param.hpp"
#include "hsifsl/rng.hpp"
#include "hsifsl/tensor.hpp"

namespace hsifsl {

/// Checkpoint archive: a directory with `index.json` (tensor index, run
/// configuration, step counter, rng state) and `tensors.bin` (all tensors
/// concatenated as float32 little-endian).
namespace checkpoint {

namespace detail {

template <typename T>
void append_tensor(nlohmann::json& index, std::vector<float>& blob,
                   const std::string& name, const Tensor<T>& t) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", blob.size()}});
    for (std::size_t i = 0; i < t.size(); ++i)
        blob.push_back(static_cast<float>(t[i]));
}

template <typename T>
void read_tensor(const nlohmann::json& entry, const std::vector<float>& blob,
                 Tensor<T>& t) {
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    const std::size_t n = Tensor<T>::count(shape);
    if (offset + n > blob.size())
        throw std::runtime_error("checkpoint: tensor " +
                                 entry.at("name").get<std::string>() +
                                 " out of blob bounds");
    if (!t.empty() && t.shape() != shape)
        throw std::runtime_error("checkpoint: tensor " +
                                 entry.at("name").get<std::string>() +
                                 " has shape " + std::to_string(n) +
                                 " incompatible with the model");
    t.resize(shape);
    for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<T>(blob[offset + i]);
}

}  // namespace detail

template <typename T>
void save(const std::filesystem::path& dir, nn::ParamRegistry<T>& reg,
          nn::Adam<T>& optim, std::size_t step, const Rng& rng,
          const nlohmann::json& config) {
    std::filesystem::create_directories(dir);
    nlohmann::json tensors = nlohmann::json::array();
    std::vector<float> blob;
    for (const auto& [name, p] : reg.params)
        detail::append_tensor(tensors, blob, name, p->value);
    for (const auto& [name, t] : reg.buffers)
        detail::append_tensor(tensors, blob, name, *t);
    for (const auto& [name, m] : optim.first_moments())
        detail::append_tensor(tensors, blob, "optim.m." + name, m);
    for (const auto& [name, v] : optim.second_moments())
        detail::append_tensor(tensors, blob, "optim.v." + name, v);

    nlohmann::json index = {
        {"step", step},
        {"optim_step", optim.step_count()},
        {"rng", rng.serialize()},
        {"config", config},
        {"tensors", tensors},
    };
    std::ofstream idx(dir / "index.json");
    idx << index.dump(2) << "\n";
    if (!idx) throw std::runtime_error("checkpoint: cannot write index.json");

    std::ofstream bin(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
    bin.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!bin) throw std::runtime_error("checkpoint: cannot write tensors.bin");
}

struct LoadedMeta {
    std::size_t step = 0;
    Rng rng;
    nlohmann::json config;
};

template <typename T>
LoadedMeta load(const std::filesystem::path& dir, nn::ParamRegistry<T>& reg,
                nn::Adam<T>* optim) {
    std::ifstream idx_in(dir / "index.json");
    if (!idx_in) throw std::runtime_error("checkpoint: missing " +
                                          (dir / "index.json").string());
    nlohmann::json index;
    idx_in >> index;

    std::ifstream bin(dir / "tensors.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("checkpoint: missing tensors.bin");
    bin.seekg(0, std::ios::end);
    std::vector<float> blob(static_cast<std::size_t>(bin.tellg()) / sizeof(float));
    bin.seekg(0);
    bin.read(reinterpret_cast<char*>(blob.data()),
             static_cast<std::streamsize>(blob.size() * sizeof(float)));

    std::map<std::string, const nlohmann::json*> by_name;
    for (const auto& entry : index.at("tensors"))
        by_name[entry.at("name").get<std::string>()] = &entry;

    auto want = [&](const std::string& name) -> const nlohmann::json& {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint: tensor " + name + " not found");
        return *it->second;
    };

    for (auto& [name, p] : reg.params) detail::read_tensor(want(name), blob, p->value);
    for (auto& [name, t] : reg.buffers) detail::read_tensor(want(name), blob, *t);
    if (optim) {
        optim->set_step_count(index.at("optim_step").get<std::size_t>());
        for (auto& [name, p] : reg.params) {
            detail::read_tensor(want("optim.m." + name), blob,
                                optim->first_moments()[name]);
            detail::read_tensor(want("optim.v." + name), blob,
                                optim->second_moments()[name]);
        }
    }

    LoadedMeta meta;
    meta.step = index.at("step").get<std::size_t>();
    meta.rng = Rng::deserialize(index.at("rng").get<std::string>());
    meta.config = index.at("config");
    return meta;
}

}  // namespace checkpoint
}  // namespace hsifsl
