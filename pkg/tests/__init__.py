"""
测试包
""" 