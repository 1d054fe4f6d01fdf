"""htpose - 多视角 3D 人体姿态整体三角化"""
__version__ = "0.1.0"
