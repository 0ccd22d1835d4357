#include "binary_io.hpp"
#include "mrb/model.hpp"

namespace mrb {

namespace {
constexpr char kModelMagic[4] = {'M', 'R', 'B', 'W'};
constexpr std::uint32_t kModelVersion = 1;
}  // namespace

void save_model(const Model<float>& model, const std::string& path) {
  detail::ByteWriter w;
  w.raw(kModelMagic, 4);
  w.u32(kModelVersion);
  w.str(to_json(model.config()).dump());
  const auto weights = model.weights();
  w.u32(detail::ByteWriter::checked_u32(weights.size(), "tensor count"));
  for (const auto& [name, tensor] : weights) {
    w.str(name);
    w.u32(detail::ByteWriter::checked_u32(tensor.rank(), "rank"));
    for (auto d : tensor.shape()) w.u32(detail::ByteWriter::checked_u32(d, "dimension"));
    w.f32s(tensor.ptr(), tensor.size());
  }
  w.save(path);
}

LoadedModel load_model(const std::string& path) {
  auto r = detail::ByteReader::open(path);
  if (r.remaining() < 4 || r.bytes(4, "magic") != std::string(kModelMagic, 4)) {
    throw BadMagicError("'" + path + "' is not a model file (bad magic)");
  }
  const auto version = r.u32("version");
  if (version != kModelVersion) {
    throw VersionError("'" + path + "' has model format version " + std::to_string(version) +
                       ", expected " + std::to_string(kModelVersion));
  }
  const std::string blob = r.str("config");
  LoadedModel out;
  try {
    out.config = model_config_from_json(nlohmann::json::parse(blob));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path + "' embedded config is not valid JSON: " + e.what());
  } catch (const ConfigError& e) {
    throw ConsistencyError("'" + path + "' embedded config is invalid: " + e.what());
  }

  const auto count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string ctx = "tensor " + std::to_string(i);
    std::string name = r.str(ctx + " name");
    const auto rank = r.u32(ctx + " rank");
    if (rank == 0) throw ConsistencyError("'" + path + "' " + ctx + " has rank 0");
    Shape shape;
    for (std::uint32_t a = 0; a < rank; ++a) shape.push_back(r.u32(ctx + " dims"));
    const std::size_t n = shape_size(shape);
    std::vector<float> data(n > r.remaining() / sizeof(float) ? 0 : n);
    if (data.size() != n) r.need(n * sizeof(float), ctx + " payload");
    r.f32s(data.data(), n, ctx + " payload");
    out.weights.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  r.expect_end();

  // Names, count, and shapes must match what the config would build.
  Model<float>::from_weights(out.config, out.weights);
  return out;
}

}  // namespace mrb
