#include "s3net/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace s3net {

namespace {

constexpr char kMagic[8] = {'S', '3', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t get_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    S3NET_CHECK_IO(is.gcount() == 8, "truncated checkpoint '", path, "'");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_tensor(std::ostream& os, const Tensor<float>& t) {
    put_u64(os, static_cast<uint64_t>(t.dim()));
    for (int64_t i = 0; i < t.dim(); ++i) put_u64(os, static_cast<uint64_t>(t.size(i)));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.numel())));
}

Tensor<float> get_tensor(std::istream& is, const std::string& path) {
    const uint64_t ndim = get_u64(is, path);
    S3NET_CHECK_IO(ndim <= 8, "corrupt checkpoint '", path, "': tensor rank ", ndim);
    std::vector<int64_t> shape;
    for (uint64_t i = 0; i < ndim; ++i)
        shape.push_back(static_cast<int64_t>(get_u64(is, path)));
    Tensor<float> t(shape);
    const auto bytes = static_cast<std::streamsize>(sizeof(float) *
                                                    static_cast<size_t>(t.numel()));
    is.read(reinterpret_cast<char*>(t.data()), bytes);
    S3NET_CHECK_IO(is.gcount() == bytes, "truncated checkpoint '", path, "'");
    return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
    std::ofstream os(path, std::ios::binary);
    S3NET_CHECK_IO(os.good(), "cannot write checkpoint '", path, "'");
    os.write(kMagic, sizeof(kMagic));
    put_u64(os, data.step);
    put_u64(os, data.config_text.size());
    os.write(data.config_text.data(), static_cast<std::streamsize>(data.config_text.size()));
    put_u64(os, data.params.size());
    for (const auto& [name, tensor] : data.params) {
        put_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_tensor(os, tensor);
    }
    os.put(data.has_optimizer ? 1 : 0);
    if (data.has_optimizer) {
        S3NET_CHECK(data.adam_m.size() == data.params.size() &&
                        data.adam_v.size() == data.params.size(),
                    "checkpoint: optimizer state count mismatch");
        put_u64(os, data.adam_step);
        for (size_t i = 0; i < data.params.size(); ++i) {
            put_tensor(os, data.adam_m[i]);
            put_tensor(os, data.adam_v[i]);
        }
    }
    S3NET_CHECK_IO(os.good(), "write failure on checkpoint '", path, "'");
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    S3NET_CHECK_IO(is.good(), "cannot open checkpoint '", path, "'");
    char magic[8];
    is.read(magic, 8);
    S3NET_CHECK_IO(is.gcount() == 8 && std::memcmp(magic, kMagic, 8) == 0,
                   "'", path, "' is not an s3net checkpoint");
    CheckpointData data;
    data.step = get_u64(is, path);
    const uint64_t cfg_len = get_u64(is, path);
    data.config_text.resize(cfg_len);
    is.read(data.config_text.data(), static_cast<std::streamsize>(cfg_len));
    S3NET_CHECK_IO(is.gcount() == static_cast<std::streamsize>(cfg_len),
                   "truncated checkpoint '", path, "'");
    const uint64_t n_params = get_u64(is, path);
    for (uint64_t i = 0; i < n_params; ++i) {
        const uint64_t name_len = get_u64(is, path);
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        S3NET_CHECK_IO(is.gcount() == static_cast<std::streamsize>(name_len),
                       "truncated checkpoint '", path, "'");
        data.params.emplace_back(std::move(name), get_tensor(is, path));
    }
    data.has_optimizer = is.get() == 1;
    if (data.has_optimizer) {
        data.adam_step = get_u64(is, path);
        for (uint64_t i = 0; i < n_params; ++i) {
            data.adam_m.push_back(get_tensor(is, path));
            data.adam_v.push_back(get_tensor(is, path));
        }
    }
    return data;
}

CheckpointData snapshot(const nn::ParamSet<float>& params, nn::Adam<float>* optimizer,
                        uint64_t step, const std::string& config_text) {
    CheckpointData data;
    data.step = step;
    data.config_text = config_text;
    for (const auto& [name, var] : params.items) data.params.emplace_back(name, var->value);
    if (optimizer) {
        data.has_optimizer = true;
        data.adam_step = static_cast<uint64_t>(optimizer->step_count());
        data.adam_m = optimizer->moment1();
        data.adam_v = optimizer->moment2();
    }
    return data;
}

void restore_params(nn::ParamSet<float>& params, const CheckpointData& data) {
    S3NET_CHECK(params.items.size() == data.params.size(), "checkpoint holds ",
                data.params.size(), " parameters but the model has ", params.items.size(),
                " (config mismatch?)");
    for (size_t i = 0; i < params.items.size(); ++i) {
        auto& [name, var] = params.items[i];
        const auto& [ck_name, ck_tensor] = data.params[i];
        S3NET_CHECK(name == ck_name, "checkpoint parameter ", i, " is '", ck_name,
                    "' but the model expects '", name, "'");
        S3NET_CHECK(var->value.same_shape(ck_tensor), "checkpoint parameter '", name,
                    "' has shape ", shape_str(ck_tensor.shape()), ", model expects ",
                    shape_str(var->value.shape()));
        var->value = ck_tensor;
    }
}

void restore_optimizer(nn::Adam<float>& optimizer, const CheckpointData& data) {
    S3NET_CHECK(data.has_optimizer, "checkpoint has no optimizer state");
    S3NET_CHECK(optimizer.moment1().size() == data.adam_m.size(),
                "checkpoint optimizer state count mismatch");
    optimizer.set_step_count(static_cast<int64_t>(data.adam_step));
    optimizer.moment1() = data.adam_m;
    optimizer.moment2() = data.adam_v;
}

}  // namespace s3net
