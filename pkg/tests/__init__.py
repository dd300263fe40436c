# Delta-system transducer simulator - Test Suite
