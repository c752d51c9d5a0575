// DenseNet-201, MobileNetV2 and Inception-v3 feature extractors. Module and
// parameter names follow torchvision so that exported ImageNet weights load
// by key.

#include <torch/torch.h>

#include "tealeaf/error.hpp"
#include "tealeaf/model.hpp"

namespace tealeaf {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

// ---------------------------------------------------------------- DenseNet

class DenseLayerImpl : public nn::Module {
 public:
  DenseLayerImpl(std::int64_t in_channels, std::int64_t growth_rate, std::int64_t bn_size)
      : norm1(register_module("norm1", nn::BatchNorm2d(in_channels))),
        conv1(register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in_channels, bn_size * growth_rate, 1)
                                                      .bias(false)))),
        norm2(register_module("norm2", nn::BatchNorm2d(bn_size * growth_rate))),
        conv2(register_module("conv2", nn::Conv2d(nn::Conv2dOptions(bn_size * growth_rate, growth_rate, 3)
                                                      .padding(1)
                                                      .bias(false)))) {}

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = conv1(torch::relu(norm1(x)));
    return conv2(torch::relu(norm2(y)));
  }

  nn::BatchNorm2d norm1;
  nn::Conv2d conv1;
  nn::BatchNorm2d norm2;
  nn::Conv2d conv2;
};
TORCH_MODULE(DenseLayer);

class DenseBlockImpl : public nn::Module {
 public:
  DenseBlockImpl(int num_layers, std::int64_t in_channels, std::int64_t growth_rate, std::int64_t bn_size) {
    for (int i = 0; i < num_layers; ++i) {
      layers_.push_back(register_module("denselayer" + std::to_string(i + 1),
                                        DenseLayer(in_channels + i * growth_rate, growth_rate, bn_size)));
    }
  }

  torch::Tensor forward(torch::Tensor x) {
    std::vector<torch::Tensor> features{std::move(x)};
    for (auto& layer : layers_) {
      features.push_back(layer->forward(torch::cat(features, 1)));
    }
    return torch::cat(features, 1);
  }

 private:
  std::vector<DenseLayer> layers_;
};
TORCH_MODULE(DenseBlock);

class TransitionImpl : public nn::Module {
 public:
  TransitionImpl(std::int64_t in_channels, std::int64_t out_channels)
      : norm(register_module("norm", nn::BatchNorm2d(in_channels))),
        conv(register_module("conv", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 1).bias(false)))) {}

  torch::Tensor forward(const torch::Tensor& x) {
    return F::avg_pool2d(conv(torch::relu(norm(x))), F::AvgPool2dFuncOptions(2).stride(2));
  }

  nn::BatchNorm2d norm;
  nn::Conv2d conv;
};
TORCH_MODULE(Transition);

class DenseNetFeaturesImpl : public nn::Module {
 public:
  DenseNetFeaturesImpl(std::vector<int> block_config, std::int64_t growth_rate, std::int64_t init_features,
                       std::int64_t bn_size) {
    conv0 = register_module("conv0", nn::Conv2d(nn::Conv2dOptions(3, init_features, 7).stride(2).padding(3).bias(false)));
    norm0 = register_module("norm0", nn::BatchNorm2d(init_features));
    std::int64_t channels = init_features;
    for (std::size_t i = 0; i < block_config.size(); ++i) {
      blocks_.push_back(register_module("denseblock" + std::to_string(i + 1),
                                        DenseBlock(block_config[i], channels, growth_rate, bn_size)));
      channels += block_config[i] * growth_rate;
      if (i + 1 != block_config.size()) {
        transitions_.push_back(register_module("transition" + std::to_string(i + 1), Transition(channels, channels / 2)));
        channels /= 2;
      }
    }
    norm5 = register_module("norm5", nn::BatchNorm2d(channels));
    out_channels = channels;
  }

  torch::Tensor forward(torch::Tensor x) {
    x = torch::relu(norm0(conv0(x)));
    x = F::max_pool2d(x, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      x = blocks_[i]->forward(x);
      if (i < transitions_.size()) {
        x = transitions_[i]->forward(x);
      }
    }
    return norm5(x);
  }

  nn::Conv2d conv0{nullptr};
  nn::BatchNorm2d norm0{nullptr};
  nn::BatchNorm2d norm5{nullptr};
  std::int64_t out_channels = 0;

 private:
  std::vector<DenseBlock> blocks_;
  std::vector<Transition> transitions_;
};
TORCH_MODULE(DenseNetFeatures);

class DenseNetBackbone : public Backbone {
 public:
  DenseNetBackbone()
      : features_(register_module("features", DenseNetFeatures(std::vector<int>{6, 12, 48, 32}, 32, 64, 4))) {}

  torch::Tensor forward(torch::Tensor x) override { return torch::relu(features_->forward(std::move(x))); }
  std::int64_t out_channels() const override { return features_->out_channels; }
  std::string feature_layer() const override { return "features.norm5"; }

 private:
  DenseNetFeatures features_;
};

// ------------------------------------------------------------- MobileNetV2

// Sequential with a concrete forward() so it can sit inside another
// Sequential.
class StageImpl : public nn::SequentialImpl {
 public:
  using nn::SequentialImpl::SequentialImpl;
  torch::Tensor forward(torch::Tensor x) { return nn::SequentialImpl::forward(x); }
};
TORCH_MODULE(Stage);

Stage conv_bn_relu6(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride,
                    std::int64_t groups = 1) {
  return Stage(
      nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding((kernel - 1) / 2).groups(groups).bias(false)),
      nn::BatchNorm2d(out), nn::ReLU6());
}

class InvertedResidualImpl : public nn::Module {
 public:
  InvertedResidualImpl(std::int64_t in, std::int64_t out, std::int64_t stride, std::int64_t expand_ratio)
      : use_residual_(stride == 1 && in == out) {
    const std::int64_t hidden = in * expand_ratio;
    Stage layers;
    if (expand_ratio != 1) {
      layers->push_back(conv_bn_relu6(in, hidden, 1, 1));
    }
    layers->push_back(conv_bn_relu6(hidden, hidden, 3, stride, hidden));
    layers->push_back(nn::Conv2d(nn::Conv2dOptions(hidden, out, 1).bias(false)));
    layers->push_back(nn::BatchNorm2d(out));
    conv_ = register_module("conv", layers);
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = conv_->forward(x);
    return use_residual_ ? x + y : y;
  }

 private:
  bool use_residual_;
  Stage conv_{nullptr};
};
TORCH_MODULE(InvertedResidual);

class MobileNetV2Backbone : public Backbone {
 public:
  MobileNetV2Backbone() {
    struct StageSpec {
      std::int64_t expand, channels, repeats, stride;
    };
    const StageSpec stages[] = {{1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2},
                            {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
    nn::Sequential features;
    std::int64_t channels = 32;
    features->push_back(conv_bn_relu6(3, channels, 3, 2));
    for (const auto& s : stages) {
      for (std::int64_t i = 0; i < s.repeats; ++i) {
        features->push_back(InvertedResidual(channels, s.channels, i == 0 ? s.stride : 1, s.expand));
        channels = s.channels;
      }
    }
    features->push_back(conv_bn_relu6(channels, last_channels_, 1, 1));
    features_ = register_module("features", features);
  }

  torch::Tensor forward(torch::Tensor x) override { return features_->forward(x); }
  std::int64_t out_channels() const override { return last_channels_; }
  std::string feature_layer() const override { return "features.18"; }

 private:
  std::int64_t last_channels_ = 1280;
  nn::Sequential features_{nullptr};
};

// ------------------------------------------------------------ Inception-v3

class BasicConv2dImpl : public nn::Module {
 public:
  BasicConv2dImpl(std::int64_t in, std::int64_t out, torch::ExpandingArray<2> kernel,
                  torch::ExpandingArray<2> stride = 1, torch::ExpandingArray<2> padding = 0)
      : conv(register_module("conv", nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding).bias(false)))),
        bn(register_module("bn", nn::BatchNorm2d(nn::BatchNorm2dOptions(out).eps(0.001)))) {}

  torch::Tensor forward(const torch::Tensor& x) { return torch::relu(bn(conv(x))); }

  nn::Conv2d conv;
  nn::BatchNorm2d bn;
};
TORCH_MODULE(BasicConv2d);

// The module holder forwards its arguments through a template, which cannot
// deduce brace-initialized kernel sizes.
BasicConv2d basic_conv(std::int64_t in, std::int64_t out, torch::ExpandingArray<2> kernel,
                       torch::ExpandingArray<2> stride = 1, torch::ExpandingArray<2> padding = 0) {
  return BasicConv2d(in, out, kernel, stride, padding);
}

torch::Tensor avg_pool_3x3_same(const torch::Tensor& x) {
  return F::avg_pool2d(x, F::AvgPool2dFuncOptions(3).stride(1).padding(1));
}

torch::Tensor max_pool_3x3_s2(const torch::Tensor& x) {
  return F::max_pool2d(x, F::MaxPool2dFuncOptions(3).stride(2));
}

class InceptionAImpl : public nn::Module {
 public:
  InceptionAImpl(std::int64_t in, std::int64_t pool_features)
      : branch1x1(register_module("branch1x1", basic_conv(in, 64, 1))),
        branch5x5_1(register_module("branch5x5_1", basic_conv(in, 48, 1))),
        branch5x5_2(register_module("branch5x5_2", basic_conv(48, 64, 5, 1, 2))),
        branch3x3dbl_1(register_module("branch3x3dbl_1", basic_conv(in, 64, 1))),
        branch3x3dbl_2(register_module("branch3x3dbl_2", basic_conv(64, 96, 3, 1, 1))),
        branch3x3dbl_3(register_module("branch3x3dbl_3", basic_conv(96, 96, 3, 1, 1))),
        branch_pool(register_module("branch_pool", basic_conv(in, pool_features, 1))) {}

  torch::Tensor forward(const torch::Tensor& x) {
    auto b1 = branch1x1(x);
    auto b5 = branch5x5_2(branch5x5_1(x));
    auto b3 = branch3x3dbl_3(branch3x3dbl_2(branch3x3dbl_1(x)));
    auto bp = branch_pool(avg_pool_3x3_same(x));
    return torch::cat({b1, b5, b3, bp}, 1);
  }

  BasicConv2d branch1x1, branch5x5_1, branch5x5_2, branch3x3dbl_1, branch3x3dbl_2, branch3x3dbl_3, branch_pool;
};
TORCH_MODULE(InceptionA);

class InceptionBImpl : public nn::Module {
 public:
  explicit InceptionBImpl(std::int64_t in)
      : branch3x3(register_module("branch3x3", basic_conv(in, 384, 3, 2))),
        branch3x3dbl_1(register_module("branch3x3dbl_1", basic_conv(in, 64, 1))),
        branch3x3dbl_2(register_module("branch3x3dbl_2", basic_conv(64, 96, 3, 1, 1))),
        branch3x3dbl_3(register_module("branch3x3dbl_3", basic_conv(96, 96, 3, 2))) {}

  torch::Tensor forward(const torch::Tensor& x) {
    auto b3 = branch3x3(x);
    auto bd = branch3x3dbl_3(branch3x3dbl_2(branch3x3dbl_1(x)));
    return torch::cat({b3, bd, max_pool_3x3_s2(x)}, 1);
  }

  BasicConv2d branch3x3, branch3x3dbl_1, branch3x3dbl_2, branch3x3dbl_3;
};
TORCH_MODULE(InceptionB);

class InceptionCImpl : public nn::Module {
 public:
  InceptionCImpl(std::int64_t in, std::int64_t c7)
      : branch1x1(register_module("branch1x1", basic_conv(in, 192, 1))),
        branch7x7_1(register_module("branch7x7_1", basic_conv(in, c7, 1))),
        branch7x7_2(register_module("branch7x7_2", basic_conv(c7, c7, {1, 7}, 1, {0, 3}))),
        branch7x7_3(register_module("branch7x7_3", basic_conv(c7, 192, {7, 1}, 1, {3, 0}))),
        branch7x7dbl_1(register_module("branch7x7dbl_1", basic_conv(in, c7, 1))),
        branch7x7dbl_2(register_module("branch7x7dbl_2", basic_conv(c7, c7, {7, 1}, 1, {3, 0}))),
        branch7x7dbl_3(register_module("branch7x7dbl_3", basic_conv(c7, c7, {1, 7}, 1, {0, 3}))),
        branch7x7dbl_4(register_module("branch7x7dbl_4", basic_conv(c7, c7, {7, 1}, 1, {3, 0}))),
        branch7x7dbl_5(register_module("branch7x7dbl_5", basic_conv(c7, 192, {1, 7}, 1, {0, 3}))),
        branch_pool(register_module("branch_pool", basic_conv(in, 192, 1))) {}

  torch::Tensor forward(const torch::Tensor& x) {
    auto b1 = branch1x1(x);
    auto b7 = branch7x7_3(branch7x7_2(branch7x7_1(x)));
    auto bd = branch7x7dbl_5(branch7x7dbl_4(branch7x7dbl_3(branch7x7dbl_2(branch7x7dbl_1(x)))));
    auto bp = branch_pool(avg_pool_3x3_same(x));
    return torch::cat({b1, b7, bd, bp}, 1);
  }

  BasicConv2d branch1x1, branch7x7_1, branch7x7_2, branch7x7_3, branch7x7dbl_1, branch7x7dbl_2, branch7x7dbl_3,
      branch7x7dbl_4, branch7x7dbl_5, branch_pool;
};
TORCH_MODULE(InceptionC);

class InceptionDImpl : public nn::Module {
 public:
  explicit InceptionDImpl(std::int64_t in)
      : branch3x3_1(register_module("branch3x3_1", basic_conv(in, 192, 1))),
        branch3x3_2(register_module("branch3x3_2", basic_conv(192, 320, 3, 2))),
        branch7x7x3_1(register_module("branch7x7x3_1", basic_conv(in, 192, 1))),
        branch7x7x3_2(register_module("branch7x7x3_2", basic_conv(192, 192, {1, 7}, 1, {0, 3}))),
        branch7x7x3_3(register_module("branch7x7x3_3", basic_conv(192, 192, {7, 1}, 1, {3, 0}))),
        branch7x7x3_4(register_module("branch7x7x3_4", basic_conv(192, 192, 3, 2))) {}

  torch::Tensor forward(const torch::Tensor& x) {
    auto b3 = branch3x3_2(branch3x3_1(x));
    auto b7 = branch7x7x3_4(branch7x7x3_3(branch7x7x3_2(branch7x7x3_1(x))));
    return torch::cat({b3, b7, max_pool_3x3_s2(x)}, 1);
  }

  BasicConv2d branch3x3_1, branch3x3_2, branch7x7x3_1, branch7x7x3_2, branch7x7x3_3, branch7x7x3_4;
};
TORCH_MODULE(InceptionD);

class InceptionEImpl : public nn::Module {
 public:
  explicit InceptionEImpl(std::int64_t in)
      : branch1x1(register_module("branch1x1", basic_conv(in, 320, 1))),
        branch3x3_1(register_module("branch3x3_1", basic_conv(in, 384, 1))),
        branch3x3_2a(register_module("branch3x3_2a", basic_conv(384, 384, {1, 3}, 1, {0, 1}))),
        branch3x3_2b(register_module("branch3x3_2b", basic_conv(384, 384, {3, 1}, 1, {1, 0}))),
        branch3x3dbl_1(register_module("branch3x3dbl_1", basic_conv(in, 448, 1))),
        branch3x3dbl_2(register_module("branch3x3dbl_2", basic_conv(448, 384, 3, 1, 1))),
        branch3x3dbl_3a(register_module("branch3x3dbl_3a", basic_conv(384, 384, {1, 3}, 1, {0, 1}))),
        branch3x3dbl_3b(register_module("branch3x3dbl_3b", basic_conv(384, 384, {3, 1}, 1, {1, 0}))),
        branch_pool(register_module("branch_pool", basic_conv(in, 192, 1))) {}

  torch::Tensor forward(const torch::Tensor& x) {
    auto b1 = branch1x1(x);
    auto b3 = branch3x3_1(x);
    b3 = torch::cat({branch3x3_2a(b3), branch3x3_2b(b3)}, 1);
    auto bd = branch3x3dbl_2(branch3x3dbl_1(x));
    bd = torch::cat({branch3x3dbl_3a(bd), branch3x3dbl_3b(bd)}, 1);
    auto bp = branch_pool(avg_pool_3x3_same(x));
    return torch::cat({b1, b3, bd, bp}, 1);
  }

  BasicConv2d branch1x1, branch3x3_1, branch3x3_2a, branch3x3_2b, branch3x3dbl_1, branch3x3dbl_2, branch3x3dbl_3a,
      branch3x3dbl_3b, branch_pool;
};
TORCH_MODULE(InceptionE);

class InceptionV3Backbone : public Backbone {
 public:
  InceptionV3Backbone()
      : Conv2d_1a_3x3(register_module("Conv2d_1a_3x3", basic_conv(3, 32, 3, 2))),
        Conv2d_2a_3x3(register_module("Conv2d_2a_3x3", basic_conv(32, 32, 3))),
        Conv2d_2b_3x3(register_module("Conv2d_2b_3x3", basic_conv(32, 64, 3, 1, 1))),
        Conv2d_3b_1x1(register_module("Conv2d_3b_1x1", basic_conv(64, 80, 1))),
        Conv2d_4a_3x3(register_module("Conv2d_4a_3x3", basic_conv(80, 192, 3))),
        Mixed_5b(register_module("Mixed_5b", InceptionA(192, 32))),
        Mixed_5c(register_module("Mixed_5c", InceptionA(256, 64))),
        Mixed_5d(register_module("Mixed_5d", InceptionA(288, 64))),
        Mixed_6a(register_module("Mixed_6a", InceptionB(288))),
        Mixed_6b(register_module("Mixed_6b", InceptionC(768, 128))),
        Mixed_6c(register_module("Mixed_6c", InceptionC(768, 160))),
        Mixed_6d(register_module("Mixed_6d", InceptionC(768, 160))),
        Mixed_6e(register_module("Mixed_6e", InceptionC(768, 192))),
        Mixed_7a(register_module("Mixed_7a", InceptionD(768))),
        Mixed_7b(register_module("Mixed_7b", InceptionE(1280))),
        Mixed_7c(register_module("Mixed_7c", InceptionE(2048))) {}

  torch::Tensor forward(torch::Tensor x) override {
    x = Conv2d_2b_3x3(Conv2d_2a_3x3(Conv2d_1a_3x3(x)));
    x = max_pool_3x3_s2(x);
    x = Conv2d_4a_3x3(Conv2d_3b_1x1(x));
    x = max_pool_3x3_s2(x);
    x = Mixed_5d(Mixed_5c(Mixed_5b(x)));
    x = Mixed_6a(x);
    x = Mixed_6e(Mixed_6d(Mixed_6c(Mixed_6b(x))));
    x = Mixed_7a(x);
    return Mixed_7c(Mixed_7b(x));
  }

  std::int64_t out_channels() const override { return 2048; }
  std::string feature_layer() const override { return "Mixed_7c"; }

 private:
  BasicConv2d Conv2d_1a_3x3, Conv2d_2a_3x3, Conv2d_2b_3x3, Conv2d_3b_1x1, Conv2d_4a_3x3;
  InceptionA Mixed_5b, Mixed_5c, Mixed_5d;
  InceptionB Mixed_6a;
  InceptionC Mixed_6b, Mixed_6c, Mixed_6d, Mixed_6e;
  InceptionD Mixed_7a;
  InceptionE Mixed_7b, Mixed_7c;
};

}  // namespace

std::shared_ptr<Backbone> build_backbone(ArchitectureId arch) {
  switch (arch) {
    case ArchitectureId::densenet201: return std::make_shared<DenseNetBackbone>();
    case ArchitectureId::mobilenet_v2: return std::make_shared<MobileNetV2Backbone>();
    case ArchitectureId::inception_v3: return std::make_shared<InceptionV3Backbone>();
  }
  throw Error(ErrorCode::UnknownArchitecture, "unknown architecture id");
}

}  // namespace tealeaf
