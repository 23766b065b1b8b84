#include <gtest/gtest.h>

#include <thread>

#include "fsr/ops.hpp"
#include "fsr/tensor.hpp"

using namespace fsr;

TEST(Tensor, ConstructionAndAccess) {
    Tensor t = Tensor::mat({{1, 2, 3}, {4, 5, 6}});
    EXPECT_EQ(t.shape(), (Shape{2, 3}));
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_DOUBLE_EQ(t.at({1, 2}), 6.0);
    EXPECT_DOUBLE_EQ(Tensor::scalar(3.5).item(), 3.5);
    EXPECT_EQ(Tensor::scalar(1).rank(), 0u);
    EXPECT_THROW(t.item(), ShapeError);
    EXPECT_THROW(Tensor({2, 0}), ShapeError);
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Tensor, HandleSemanticsAndDetach) {
    Tensor a = Tensor::vec({1, 2});
    Tensor b = a;
    b.mutable_data()[0] = 9;
    EXPECT_DOUBLE_EQ(a[0], 9);
    Tensor c = a.detach();
    c.mutable_data()[0] = 1;
    EXPECT_DOUBLE_EQ(a[0], 9);
    EXPECT_FALSE(c.same_storage(a));
}

TEST(Tensor, BackwardSimpleChain) {
    Tensor x = Tensor::vec({1, 2, 3});
    x.set_requires_grad(true);
    Tensor y = sum_all(hadamard(x, x));  // d/dx = 2x
    y.backward();
    ASSERT_TRUE(x.has_grad());
    EXPECT_DOUBLE_EQ(x.grad()[0], 2);
    EXPECT_DOUBLE_EQ(x.grad()[2], 6);
    EXPECT_EQ(Tape::current().size(), 0u);
}

TEST(Tensor, GradientsAccumulateAcrossUses) {
    Tensor x = Tensor::vec({1.5});
    x.set_requires_grad(true);
    Tensor y = sum_all(add(scale(x, 3), x));
    y.backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 4);
    x.zero_grad();
    EXPECT_FALSE(x.has_grad() && x.grad()[0] != 0.0);
}

TEST(Tensor, BackwardRequiresScalar) {
    Tensor x = Tensor::vec({1, 2});
    x.set_requires_grad(true);
    EXPECT_THROW(scale(x, 2).backward(), ShapeError);
    Tape::current().clear();
}

TEST(Tensor, NoGradGuardSkipsRecording) {
    Tape::current().clear();
    Tensor x = Tensor::vec({1, 2});
    x.set_requires_grad(true);
    {
        NoGradGuard g;
        Tensor y = scale(x, 2);
        EXPECT_FALSE(y.requires_grad());
        EXPECT_EQ(Tape::current().size(), 0u);
    }
    Tensor z = scale(x, 2);
    EXPECT_TRUE(z.requires_grad());
    EXPECT_EQ(Tape::current().size(), 1u);
    Tape::current().clear();
}

TEST(Tensor, ConstantsDoNotRecord) {
    Tape::current().clear();
    Tensor y = add(Tensor::vec({1}), Tensor::vec({2}));
    EXPECT_EQ(Tape::current().size(), 0u);
    EXPECT_FALSE(y.requires_grad());
}

TEST(Tensor, TapeIsPerThread) {
    Tape::current().clear();
    Tensor x = Tensor::vec({1});
    x.set_requires_grad(true);
    Tensor y = scale(x, 2);
    std::size_t other = 99;
    std::thread t([&] { other = Tape::current().size(); });
    t.join();
    EXPECT_EQ(other, 0u);
    EXPECT_EQ(Tape::current().size(), 1u);
    Tape::current().clear();
}

TEST(Tensor, TapeDescribesInputs) {
    Tape::current().clear();
    Tensor x = Tensor::vec({1, 2});
    x.set_requires_grad(true);
    Tensor y = relu(scale(x, 2));
    auto nodes = Tape::current().describe();
    ASSERT_EQ(nodes.size(), 2u);
    EXPECT_EQ(nodes[0].input_nodes, (std::vector<long>{-1}));
    EXPECT_EQ(nodes[1].input_nodes, (std::vector<long>{0}));
    Tape::current().clear();
}
