"""This file contains signals emitted by sitebid."""
import django.dispatch


sig_stage_done = django.dispatch.Signal()
"""Emitted when a pipeline stage has written its outputs.
providing_args=['stage', 'outputs', 'summary']

"""
