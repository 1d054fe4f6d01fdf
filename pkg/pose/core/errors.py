"""htpose 异常体系

ValidationError 对应 CLI 退出码 2，NumericalError 对应退出码 3。
"""


class HtPoseError(Exception):
    """htpose 异常基类"""
    exit_code = 1


class ValidationError(HtPoseError):
    """输入校验失败"""
    exit_code = 2


class NumericalError(HtPoseError):
    """数值退化"""
    exit_code = 3


# ---- 输入类错误 ----

class InsufficientViews(ValidationError):
    """观测视角少于 2 个"""


class AllZeroConfidence(ValidationError):
    """某个关节的置信度全部为 0（或少于两个正值）"""


class DimensionMismatch(ValidationError):
    """矩阵/向量维度不一致"""


class UnsupportedHop(ValidationError):
    """hop 只支持 0,1,2"""


class InsufficientSamples(ValidationError):
    """PCA 样本数不足"""


class InvalidDimension(ValidationError):
    """PCA 维数 D 不在 1..3J_s 内"""


class IndexOutOfRange(ValidationError):
    """主成分下标越界"""


class OutOfBounds(ValidationError):
    """采样点落在特征图之外"""


class NoParentBone(ValidationError):
    """关节缺少父骨骼或子骨骼"""


class MissingJointModel(ValidationError):
    """关节角模型缺少某个选定关节"""


class TooFewSamples(ValidationError):
    """GMM 样本数不足"""


class EmptyInput(ValidationError):
    """输入为空"""


class CountMismatch(ValidationError):
    """估计值与真值数量不一致"""


class NonFinite(ValidationError):
    """输入包含 NaN/Inf"""


class DegenerateHips(ValidationError):
    """左右髋在水平面上的投影重合"""


class EmptySources(ValidationError):
    """融合时没有可用的源视角"""


class MalformedInput(ValidationError):
    """输入文件结构不符合约定的格式"""


# ---- 数值类错误 ----

class DepthDegenerate(NumericalError):
    """点位于相机主平面上，齐次深度为 0"""


class RankDeficient(NumericalError):
    """矩阵秩不足"""


class DegenerateBaseline(NumericalError):
    """两个相机中心重合"""


class DegenerateRay(NumericalError):
    """方向向量长度为 0"""


class SingularSystem(NumericalError):
    """正规方程数值奇异"""


class ZeroLengthBone(NumericalError):
    """骨骼长度为 0"""


class NonMonotoneLikelihood(NumericalError):
    """EM 迭代中对数似然下降超出容差"""
