from . import session, build_data, train_pref, annotate, train_rlhf, eval_relations, report
