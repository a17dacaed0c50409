"""
测试模块

包含项目的单元测试和集成测试。
""" 