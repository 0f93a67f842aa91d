#pragma once

// Model checkpoints in the "MMJS" container: architecture as i32 meta tensors
// followed by every parameter as f32, in model order.

#include "mmjsd/container.hpp"
#include "mmjsd/model.hpp"

#include <string>
#include <vector>

namespace mmjsd {

namespace detail {

inline std::vector<std::int32_t> to_i32(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

inline std::vector<std::size_t> to_sizes(const std::vector<std::int32_t>& v) {
  std::vector<std::size_t> out;
  for (auto x : v) {
    if (x < 0) throw ContainerError("checkpoint: negative size in meta data");
    out.push_back(static_cast<std::size_t>(x));
  }
  return out;
}

inline const std::vector<std::int32_t>& i32_words(const Container& c, const std::string& name, std::vector<std::int32_t>& buf) {
  const auto& e = c.at(name);
  if (e.dtype != DType::i32) throw ContainerError("checkpoint: '" + name + "' is not i32");
  buf = e.as_i32();
  return buf;
}

}  // namespace detail

inline Container to_container(const MultimodalVAE<float>& model) {
  Container c(kCheckpointMagic);
  const std::size_t M = model.modalities();
  c.add("meta.c_dim", {1}, {static_cast<std::int32_t>(model.partition().c_dim)});
  c.add("meta.s_dims", {M}, detail::to_i32(model.partition().s_dims));
  std::vector<std::int32_t> elements, likelihood, alphabet;
  for (const auto& s : model.specs()) {
    elements.push_back(static_cast<std::int32_t>(s.element_count));
    likelihood.push_back(static_cast<std::int32_t>(s.likelihood));
    alphabet.push_back(static_cast<std::int32_t>(s.alphabet));
  }
  c.add("meta.elements", {M}, elements);
  c.add("meta.likelihood", {M}, likelihood);
  c.add("meta.alphabet", {M}, alphabet);
  for (std::size_t j = 0; j < M; ++j) {
    const auto& s = model.spec(j);
    c.add("meta.hidden." + std::to_string(j), {s.hidden.size()}, detail::to_i32(s.hidden));
    c.add("meta.name." + std::to_string(j), {s.name.size()}, std::vector<std::int32_t>(s.name.begin(), s.name.end()));
  }
  for (std::size_t k = 0; k < model.parameters().size(); ++k)
    c.add("param." + model.parameter_names()[k], model.parameters()[k]);
  return c;
}

inline MultimodalVAE<float> model_from_container(const Container& c) {
  std::vector<std::int32_t> buf;
  const auto c_dim = detail::to_sizes(detail::i32_words(c, "meta.c_dim", buf));
  if (c_dim.size() != 1) throw ContainerError("checkpoint: meta.c_dim must hold one value");
  LatentPartition part{c_dim[0], detail::to_sizes(detail::i32_words(c, "meta.s_dims", buf))};
  const std::size_t M = part.s_dims.size();
  const auto elements = detail::to_sizes(detail::i32_words(c, "meta.elements", buf));
  const auto alphabet = detail::to_sizes(detail::i32_words(c, "meta.alphabet", buf));
  const auto likelihood = detail::i32_words(c, "meta.likelihood", buf);
  if (elements.size() != M || alphabet.size() != M || likelihood.size() != M)
    throw ContainerError("checkpoint: meta tensors disagree on the modality count");
  std::vector<ModalitySpec> specs;
  for (std::size_t j = 0; j < M; ++j) {
    if (likelihood[j] < 0 || likelihood[j] > static_cast<std::int32_t>(Likelihood::categorical))
      throw ContainerError("checkpoint: unknown likelihood code " + std::to_string(likelihood[j]));
    std::vector<std::int32_t> name_buf;
    const auto& name = detail::i32_words(c, "meta.name." + std::to_string(j), name_buf);
    specs.push_back(ModalitySpec{std::string(name.begin(), name.end()), elements[j],
                                 static_cast<Likelihood>(likelihood[j]), alphabet[j],
                                 detail::to_sizes(detail::i32_words(c, "meta.hidden." + std::to_string(j), buf))});
  }
  MultimodalVAE<float> model(std::move(specs), std::move(part), 0);
  for (std::size_t k = 0; k < model.parameters().size(); ++k) {
    const auto& e = c.at("param." + model.parameter_names()[k]);
    if (e.dtype != DType::f32) throw ContainerError("checkpoint: parameter '" + e.name + "' is not f32");
    auto t = e.as_f32();
    if (t.shape() != model.parameters()[k].shape())
      throw ContainerError("checkpoint: parameter '" + e.name + "' has shape " + to_string(t.shape()) + ", expected " +
                           to_string(model.parameters()[k].shape()));
    model.parameters()[k] = std::move(t);
  }
  return model;
}

inline void save_checkpoint(const std::string& path, const MultimodalVAE<float>& model) { to_container(model).save(path); }
inline MultimodalVAE<float> load_checkpoint(const std::string& path) {
  return model_from_container(Container::load(path, kCheckpointMagic));
}

}  // namespace mmjsd
