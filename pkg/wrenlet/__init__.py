"""Stateless-function map engine over emulated cloud storage"""
