//! Deterministic FOR→LAMBDA translator: the ground truth that labels every
//! dataset record.
//!
//! Translation rules:
//!
//! * `v = e` becomes `let v = e in ()`.
//! * A sequence `s1 ; s2` translates both parts; when the first translation
//!!  is a `let` whose body is exactly `()`, the second is spliced into that
//!   body slot, otherwise the parts are chained as `let _ = t1 in t2`. The
//!   splice test is shallow (only a top-level `let` directly ending in `()`
//!   qualifies), so sequences of three or more statements produce `let _ =`
//!   chains rather than one flat chain.
//! * `if c then a else b endif` becomes the if-term over the translated
//!   branches, with the comparison copied verbatim.
//! * `for v = init ; c ; step do body endfor` becomes
//!   `letrec f v = if c then let _ = [body] in f step else () in f <entry>`,
//!   where the entry argument depends on the [`OracleMode`].
//!
//! Expressions and comparisons pass through unchanged. Every loop reuses the
//! same internal function name, so nested loops shadow inner-to-outer instead
//! of generating fresh names.

use crate::syntax::{ForAst, LambdaAst, BLANK_VAR, FUNC_VAR};

/// Selects the argument of the outer application that enters a translated
/// loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OracleMode {
    /// Enter the loop with its initializer: `for i = 1 ; … ` yields `… in f 1`.
    #[default]
    LoopFromInit,
    /// Compatibility mode that reproduces the historical reference
    /// translator exactly: the outer application repeats the step
    /// expression, yielding `… in f i + 1` for a step of `i + 1`.
    LoopFromStep,
}

/// Translates a FOR program in the default [`OracleMode::LoopFromInit`] mode.
pub fn translate(ast: &ForAst) -> LambdaAst {
    translate_with(ast, OracleMode::LoopFromInit)
}

/// Translates a FOR program with an explicit loop-entry mode.
pub fn translate_with(ast: &ForAst, mode: OracleMode) -> LambdaAst {
    debug_assert!(ast.is_well_formed());
    match ast {
        ForAst::Assign { var, value } => LambdaAst::Let {
            var: var.clone(),
            bound: Box::new(LambdaAst::Expr(value.clone())),
            body: Box::new(LambdaAst::Unit),
        },
        ForAst::If {
            cond,
            then_branch,
            else_branch,
        } => LambdaAst::IfTerm {
            cond: cond.clone(),
            then_branch: Box::new(translate_with(then_branch, mode)),
            else_branch: Box::new(translate_with(else_branch, mode)),
        },
        ForAst::For {
            var,
            init,
            cond,
            step,
            body,
        } => {
            let loop_body = LambdaAst::Let {
                var: BLANK_VAR.to_owned(),
                bound: Box::new(translate_with(body, mode)),
                body: Box::new(LambdaAst::App {
                    func: FUNC_VAR.to_owned(),
                    args: vec![step.clone()],
                }),
            };
            let fn_body = LambdaAst::IfTerm {
                cond: cond.clone(),
                then_branch: Box::new(loop_body),
                else_branch: Box::new(LambdaAst::Unit),
            };
            let entry = match mode {
                OracleMode::LoopFromInit => init.clone(),
                OracleMode::LoopFromStep => step.clone(),
            };
            LambdaAst::LetRec {
                func: FUNC_VAR.to_owned(),
                param: var.clone(),
                fn_body: Box::new(fn_body),
                body: Box::new(LambdaAst::App {
                    func: FUNC_VAR.to_owned(),
                    args: vec![entry],
                }),
            }
        }
        ForAst::Seq(items) => {
            let mut iter = items.iter();
            let first = iter
                .next()
                .expect("a well-formed sequence holds at least two statements");
            let mut term = translate_with(first, mode);
            for item in iter {
                term = splice(term, translate_with(item, mode));
            }
            term
        }
    }
}

/// Combines two sequenced translations: a top-level `let` ending directly in
/// `()` absorbs the continuation into its body; anything else is bound to the
/// throwaway variable.
fn splice(first: LambdaAst, second: LambdaAst) -> LambdaAst {
    match first {
        LambdaAst::Let { var, bound, body } if *body == LambdaAst::Unit => LambdaAst::Let {
            var,
            bound,
            body: Box::new(second),
        },
        other => LambdaAst::Let {
            var: BLANK_VAR.to_owned(),
            bound: Box::new(other),
            body: Box::new(second),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{join_tokens, parse_for, render_lambda, tokenize, LambdaAst};

    fn translate_text(source: &str, mode: OracleMode) -> String {
        let ast = parse_for(&tokenize(source)).expect("test source parses");
        join_tokens(&render_lambda(&translate_with(&ast, mode)))
    }

    #[test]
    fn translates_assignment_to_let() {
        assert_eq!(
            translate_text("y = 1", OracleMode::LoopFromInit),
            "let y = 1 in ()"
        );
    }

    #[test]
    fn translates_worked_example() {
        let source = "for i = 1 ; i < 10 ; i + 1 do if x > 1 then y = 1 else y = 2 endif endfor";
        let expected = "letrec f i = if i < 10 then let _ = if x > 1 then let y = 1 in () \
                        else let y = 2 in () in f i + 1 else () in f 1";
        assert_eq!(translate_text(source, OracleMode::LoopFromInit), expected);
    }

    #[test]
    fn step_mode_repeats_step_in_outer_application() {
        let source = "for i = 1 ; i < 10 ; i + 1 do if x > 1 then y = 1 else y = 2 endif endfor";
        let expected = "letrec f i = if i < 10 then let _ = if x > 1 then let y = 1 in () \
                        else let y = 2 in () in f i + 1 else () in f i + 1";
        assert_eq!(translate_text(source, OracleMode::LoopFromStep), expected);
    }

    #[test]
    fn splices_two_assignments_into_one_chain() {
        assert_eq!(
            translate_text("x = 1 ; y = 2", OracleMode::LoopFromInit),
            "let x = 1 in let y = 2 in ()"
        );
    }

    #[test]
    fn shallow_splice_nests_longer_sequences() {
        // After the first splice the accumulated term no longer ends directly
        // in (), so the third statement binds through the throwaway variable.
        assert_eq!(
            translate_text("x = 1 ; y = 2 ; z = 3", OracleMode::LoopFromInit),
            "let _ = let x = 1 in let y = 2 in () in let z = 3 in ()"
        );
    }

    #[test]
    fn non_let_sequence_head_binds_through_blank() {
        assert_eq!(
            translate_text(
                "if a > 1 then x = 1 else y = 2 endif ; z = 3",
                OracleMode::LoopFromInit
            ),
            "let _ = if a > 1 then let x = 1 in () else let y = 2 in () in let z = 3 in ()"
        );
    }

    #[test]
    fn nested_loops_reuse_the_same_function_name() {
        let source = "for i = 0 ; i < 9 ; i + 1 do for x = 0 ; x < 3 ; x + 1 do a = x endfor endfor";
        let target = translate(&parse_for(&tokenize(source)).expect("parses"));
        fn letrec_names(ast: &LambdaAst, out: &mut Vec<String>) {
            match ast {
                LambdaAst::LetRec {
                    func,
                    fn_body,
                    body,
                    ..
                } => {
                    out.push(func.clone());
                    letrec_names(fn_body, out);
                    letrec_names(body, out);
                }
                LambdaAst::Let { bound, body, .. } => {
                    letrec_names(bound, out);
                    letrec_names(body, out);
                }
                LambdaAst::IfTerm {
                    then_branch,
                    else_branch,
                    ..
                } => {
                    letrec_names(then_branch, out);
                    letrec_names(else_branch, out);
                }
                LambdaAst::Unit | LambdaAst::Expr(_) | LambdaAst::App { .. } => {}
            }
        }
        let mut names = Vec::new();
        letrec_names(&target, &mut names);
        assert_eq!(names, vec![FUNC_VAR.to_owned(), FUNC_VAR.to_owned()]);
    }

    #[test]
    fn loop_translation_shape() {
        // Each loop contributes exactly one letrec and two applications.
        let source = "for i = 0 ; i < 9 ; i + 1 do a = 1 endfor";
        let target = translate(&parse_for(&tokenize(source)).expect("parses"));
        fn count(ast: &LambdaAst, letrecs: &mut usize, apps: &mut usize) {
            match ast {
                LambdaAst::LetRec { fn_body, body, .. } => {
                    *letrecs += 1;
                    count(fn_body, letrecs, apps);
                    count(body, letrecs, apps);
                }
                LambdaAst::App { .. } => *apps += 1,
                LambdaAst::Let { bound, body, .. } => {
                    count(bound, letrecs, apps);
                    count(body, letrecs, apps);
                }
                LambdaAst::IfTerm {
                    then_branch,
                    else_branch,
                    ..
                } => {
                    count(then_branch, letrecs, apps);
                    count(else_branch, letrecs, apps);
                }
                LambdaAst::Unit | LambdaAst::Expr(_) => {}
            }
        }
        let (mut letrecs, mut apps) = (0, 0);
        count(&target, &mut letrecs, &mut apps);
        assert_eq!((letrecs, apps), (1, 2));
    }

    #[test]
    fn translation_is_deterministic() {
        let ast = parse_for(&tokenize("x = 1 ; if a > 1 then y = 2 else z = 3 endif"))
            .expect("parses");
        assert_eq!(translate(&ast), translate(&ast));
    }
}
