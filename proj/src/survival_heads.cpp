#include "dypro/survival_heads.hpp"

#include <string>

#include "dypro/error.hpp"
#include "dypro/graph.hpp"

namespace dypro {

HeadParams make_head_params(ad::ParameterSet& params, Eigen::Index input, Eigen::Index context,
                            Eigen::Index bins, std::mt19937_64& rng) {
  if (input < 1 || context < 1 || bins < 1) throw ConfigError("head widths must be positive");
  HeadParams heads;
  heads.input = input;
  heads.context = context;
  heads.bins = bins;
  heads.w_context = params.add("head.context.weight", uniform_init(input, context, input, rng));
  heads.b_context = params.add("head.context.bias", uniform_init(1, context, input, rng));
  heads.w_dfs = params.add("head.dfs.weight", uniform_init(input, bins, input, rng));
  heads.b_dfs = params.add("head.dfs.bias", uniform_init(1, bins, input, rng));
  const Eigen::Index os_in = input + context;
  heads.w_os = params.add("head.os.weight", uniform_init(os_in, bins, os_in, rng));
  heads.b_os = params.add("head.os.bias", uniform_init(1, bins, os_in, rng));
  return heads;
}

DfsHeadOutput dfs_head(ad::Var h_star, const HeadParams& heads) {
  if (h_star.cols() != heads.input) {
    throw ShapeError("dfs_head: h* width " + std::to_string(h_star.cols()) + ", expected " +
                     std::to_string(heads.input));
  }
  ad::Tape& tape = *h_star.tape();
  DfsHeadOutput out;
  out.context = ad::tanh(
      ad::add(ad::matmul(h_star, tape.param(heads.w_context)), tape.param(heads.b_context)));
  out.logits = ad::add(ad::matmul(h_star, tape.param(heads.w_dfs)), tape.param(heads.b_dfs));
  return out;
}

ad::Var os_head(ad::Var h_star, ad::Var dfs_context, const HeadParams& heads, bool cascade) {
  if (h_star.cols() != heads.input || dfs_context.cols() != heads.context ||
      dfs_context.rows() != h_star.rows()) {
    throw ShapeError("os_head: h* width " + std::to_string(h_star.cols()) + ", context width " +
                     std::to_string(dfs_context.cols()) + ", expected " +
                     std::to_string(heads.input) + " and " + std::to_string(heads.context));
  }
  ad::Tape& tape = *h_star.tape();
  const ad::Var context =
      cascade ? dfs_context : tape.constant(ad::Matrix::Zero(h_star.rows(), heads.context));
  return ad::add(ad::matmul(ad::concat_cols(h_star, context), tape.param(heads.w_os)),
                 tape.param(heads.b_os));
}

}  // namespace dypro
