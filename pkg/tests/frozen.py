"""Reference values computed once with mpmath (30 significant digits) from
the defining Bessel series and frozen here. They never pass through the
package code."""

I1_2 = 1.590636854637329063382254425
I0_1 = 1.26606587775200833559824462521
I0_2 = 2.27958530233606726743720444081
# I_1(2)/I_0(2)
R1_2 = 0.697774657964007982006790592552
# (I_1(2)/I_0(2))^2
R1_2_SQ = 0.48688947329678832790941234415
# I_0(1)/sqrt(I_0(2))
A0_KAPPA1 = 0.838548873803118126596208093772
# R1_2_SQ / 2 pi
Q_1_0_KAPPA1 = 0.0774908664145932400424311591889
# I_1(0.4)/I_0(0.4)
R1_04 = 0.196103812217995523872962789531

# kappa -> (state_product, meas_product, meas_norm, dispersion)
BOUNDS = {
    0.2: (0.0980519061089977619364813947654, 0.140010495839524177560654711182, 3.6407304066636577290730151577, 0.980583140194429994714076419468),
    0.5: (0.223194982948267253523840897596, 0.332136343616248673332554138831, 1.66681558565932846318998817789, 0.894838531997192641985830431718),
    1.0: (0.348887328982003991003395296276, 0.563045207286961187262336222009, 1.1564127757261068841829379549, 0.716317336592666638839614731212),
    2.0: (0.431761305512275291427324535436, 0.764653707778212381319968091857, 1.02545680386773979637250418697, 0.504310123088306360623225539754),
    4.0: (0.467617746764719302649837658614, 0.87887038814713656242628478232, 1.00480750656600373697115873268, 0.354026230162042372696633970559),
    8.0: (0.484113877714079963304475829574, 0.938474831926336156109198117904, 1.00107720881265274018510434695, 0.250070017432213024136298041944),
}
