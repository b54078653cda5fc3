"""Shim for tools that still run setup.py; metadata lives in setup.cfg"""
import setuptools

if __name__ == "__main__":
    setuptools.setup()
