"""Monitoring and observability for latentbin"""
