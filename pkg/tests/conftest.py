import hypothesis

hypothesis.settings.register_profile("relsim", deadline=None)
hypothesis.settings.load_profile("relsim")
